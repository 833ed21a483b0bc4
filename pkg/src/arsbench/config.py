"""Application configuration: JSON files in, validated dataclasses out.

Unknown keys are rejected rather than ignored so a typo cannot silently
run the defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .certainty import AdaptationConfig, ProbeConfig
from .difficulty import DEFAULT_KEYWORDS, DifficultyLexicon, ModeTag
from .engine import DEFAULT_TRIGGER_WORDS, SuppressionConfig, TriggerSet
from .errors import ConfigurationError
from .harness import EnergyMode, EnergyModel


@dataclass(frozen=True)
class AppConfig:
    """Everything the command line can configure in one place."""

    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    difficulty_cuts: tuple[float, float] = (0.35, 0.65)
    trigger_words: tuple[str, ...] = DEFAULT_TRIGGER_WORDS
    checkpoint_interval: int = 64
    max_tokens: int = 1200
    rng_seed: int = 0
    probe_prompt: str = "\nAnswer so far: "
    probe_budget: int = 16
    base_thresholds: dict[str, float] = field(default_factory=lambda: {
        "fast": 0.60, "moderate": 0.75, "deep": 0.85})
    trend_window: int = 3
    trend_gain: float = 0.5
    threshold_floor: float = 0.30
    ramp_exponent: float = 1.0
    entropy_top_k: int = 20
    static_p: float = 0.9
    budget_tokens: int = 64
    energy_mode: str = EnergyMode.POWER_TIMES_LATENCY.value
    device_power_watts: float = 250.0
    joules_per_token: float = 0.25
    backend_kind: str = "scripted"
    top_k: int = 20
    base_url: str = ""
    model: str = ""
    api_key_env: str = "ARS_HTTP_API_KEY"
    per_token_latency: float = 0.01

    @classmethod
    def default(cls) -> "AppConfig":
        return cls()

    @classmethod
    def from_dict(cls, data: dict) -> "AppConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config document must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        coerced = dict(data)
        for key in ("keywords", "trigger_words"):
            if key in coerced:
                coerced[key] = tuple(coerced[key])
        if "difficulty_cuts" in coerced:
            cuts = coerced["difficulty_cuts"]
            if not (isinstance(cuts, (list, tuple)) and len(cuts) == 2):
                raise ConfigurationError("difficulty_cuts must hold exactly two numbers")
            coerced["difficulty_cuts"] = (float(cuts[0]), float(cuts[1]))
        cfg = cls(**coerced)
        cfg.suppression_config()
        cfg.energy_model()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "AppConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    # ---- conversions to runtime objects ----

    def lexicon(self) -> DifficultyLexicon:
        return DifficultyLexicon(keywords=self.keywords)

    def adaptation_config(self) -> AdaptationConfig:
        try:
            bases = {ModeTag(name): value
                     for name, value in self.base_thresholds.items()}
        except ValueError as exc:
            raise ConfigurationError(f"unknown mode in base_thresholds: {exc}") from exc
        return AdaptationConfig(
            base_thresholds=bases,
            trend_window=self.trend_window,
            trend_gain=self.trend_gain,
            threshold_floor=self.threshold_floor,
            ramp_exponent=self.ramp_exponent,
            entropy_top_k=self.entropy_top_k,
        )

    def probe_config(self) -> ProbeConfig:
        return ProbeConfig(probe_prompt=self.probe_prompt,
                           probe_budget=self.probe_budget)

    def suppression_config(self) -> SuppressionConfig:
        return SuppressionConfig(
            checkpoint_interval=self.checkpoint_interval,
            max_tokens=self.max_tokens,
            trigger_set=TriggerSet(words=self.trigger_words),
            adaptation=self.adaptation_config(),
            probe=self.probe_config(),
            difficulty_cuts=self.difficulty_cuts,
            rng_seed=self.rng_seed,
        )

    def energy_model(self) -> EnergyModel:
        try:
            mode = EnergyMode(self.energy_mode)
        except ValueError as exc:
            raise ConfigurationError(f"unknown energy mode: {self.energy_mode!r}") from exc
        return EnergyModel(mode=mode,
                           device_power_watts=self.device_power_watts,
                           joules_per_token=self.joules_per_token)

    def to_dict(self) -> dict:
        return {
            "keywords": list(self.keywords),
            "difficulty_cuts": list(self.difficulty_cuts),
            "trigger_words": list(self.trigger_words),
            "checkpoint_interval": self.checkpoint_interval,
            "max_tokens": self.max_tokens,
            "rng_seed": self.rng_seed,
            "probe_prompt": self.probe_prompt,
            "probe_budget": self.probe_budget,
            "base_thresholds": dict(self.base_thresholds),
            "trend_window": self.trend_window,
            "trend_gain": self.trend_gain,
            "threshold_floor": self.threshold_floor,
            "ramp_exponent": self.ramp_exponent,
            "entropy_top_k": self.entropy_top_k,
            "static_p": self.static_p,
            "budget_tokens": self.budget_tokens,
            "energy_mode": self.energy_mode,
            "device_power_watts": self.device_power_watts,
            "joules_per_token": self.joules_per_token,
            "backend_kind": self.backend_kind,
            "top_k": self.top_k,
            "base_url": self.base_url,
            "model": self.model,
            "api_key_env": self.api_key_env,
            "per_token_latency": self.per_token_latency,
        }
