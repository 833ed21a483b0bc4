"""Decoding controller with certainty-gated suppression.

The loop samples one token per step. At checkpoint positions a gate probes
the backend for a tentative answer, converts probe entropy into a
confidence score, adapts the threshold with the recent trend, and sets the
current suppression probability. Whenever a sampled token starts a
redundancy trigger word, a single uniform draw decides whether it gets
resampled from the remaining candidates.

Seeding is fully deterministic: one ``random.Random`` per generation,
seeded from the run seed and the query id, and the suppression draw is
consumed only when a trigger actually comes up with a positive
suppression probability. A run with suppression permanently at zero
therefore consumes the exact same stream as an ungated run.
"""

from __future__ import annotations

import hashlib
import random
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

from .answers import extract_final_answer
from .backends import (
    EOS_TOKEN,
    FALLBACK_TOKEN,
    GeneratorBackend,
    TokenDistribution,
    sample,
)
from .certainty import (
    AdaptationConfig,
    CheckpointRecord,
    ProbeConfig,
    adaptive_threshold,
    compute_trend,
    entropy_confidence,
    probe_answer,
    suppression_probability,
)
from .difficulty import (
    DifficultyLexicon,
    DEFAULT_LEXICON,
    DeepReflectPolicy,
    ModeTag,
    Query,
    ReasoningMode,
    build_prompt,
    heuristic_difficulty,
    schedule_mode,
)
from .errors import BackendError, ConfigurationError

DEFAULT_TRIGGER_WORDS = ("Wait", "But", "Alternatively", "However", "Hmm")


@dataclass(frozen=True)
class TriggerSet:
    """Words whose emission marks the start of a redundant reflection."""

    words: tuple[str, ...] = DEFAULT_TRIGGER_WORDS
    match_case_sensitive: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(self.words))
        if not self.words:
            raise ConfigurationError("trigger set must not be empty")
        if any((not w) or w != w.strip() for w in self.words):
            raise ConfigurationError("trigger words must be non-empty and stripped")


def detect_trigger(token: str, triggers: TriggerSet) -> bool:
    """True when the token begins with a trigger as a whole word.

    Leading whitespace is ignored; the character after the match must be
    absent or non-alphabetic so "Waiting" does not count as "Wait".
    """
    text = token.lstrip()
    if not triggers.match_case_sensitive:
        text = text.lower()
    for word in triggers.words:
        probe = word if triggers.match_case_sensitive else word.lower()
        if text.startswith(probe):
            rest = text[len(probe):]
            if not rest or not rest[0].isalpha():
                return True
    return False


def resample_non_trigger(dist: TokenDistribution, triggers: TriggerSet,
                         rng) -> tuple[str, bool]:
    """Redraw from the non-trigger candidates, renormalized.

    When effectively all mass sits on triggers, emits a bare newline
    instead of stalling; the flag reports that fallback.
    """
    kept_mass = sum(p for t, p in dist.candidates if not detect_trigger(t, triggers))
    if kept_mass < 1e-9:
        return FALLBACK_TOKEN, True
    token = sample(dist, rng, mask=lambda t: not detect_trigger(t, triggers))
    return token, False


@dataclass(frozen=True)
class SuppressionEvent:
    position: int
    suppressed_token: str
    replacement_token: str
    suppression_prob: float
    random_draw: float
    used_fallback: bool


class StopReason(str, Enum):
    EOS = "eos"
    TOKEN_CAP = "token_cap"
    ERROR = "error"


@dataclass(frozen=True)
class GenerationTrace:
    """Complete audit record of one generation."""

    query_id: str
    mode: ModeTag | None
    difficulty: float | None
    text: str
    emitted_tokens: int
    probe_tokens: int
    aux_tokens: int
    checkpoints: tuple[CheckpointRecord, ...]
    suppression_events: tuple[SuppressionEvent, ...]
    final_answer: str
    stop_reason: StopReason
    wall_latency: float
    rng_seed: int
    warnings: tuple[str, ...] = ()
    error: str | None = None

    @property
    def total_tokens(self) -> int:
        return self.emitted_tokens + self.probe_tokens + self.aux_tokens


@dataclass(frozen=True)
class SuppressionConfig:
    """Everything the controller needs beyond the backend."""

    checkpoint_interval: int = 64
    max_tokens: int = 1200
    trigger_set: TriggerSet = field(default_factory=TriggerSet)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    difficulty_cuts: tuple[float, float] = (0.35, 0.65)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.checkpoint_interval < 1:
            raise ConfigurationError("checkpoint interval must be positive")
        if self.max_tokens < 1:
            raise ConfigurationError("max_tokens must be positive")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary parts, independent of PYTHONHASHSEED."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class AdaptiveGate:
    """Checkpoint logic for the adaptive controller.

    Holds the confidence history and the current suppression probability.
    A failed probe keeps the previous probability and logs a warning
    rather than aborting the generation.
    """

    def __init__(self, mode: ModeTag, cfg: SuppressionConfig):
        self.mode = mode
        self.cfg = cfg
        self.scores: list[float] = []
        self.checkpoints: list[CheckpointRecord] = []
        self.warnings: list[str] = []
        self.suppression_prob = 0.0
        self.probe_tokens = 0

    def checkpoint(self, context: str, backend: GeneratorBackend, position: int) -> None:
        adapt = self.cfg.adaptation
        try:
            result = probe_answer(context, backend, self.cfg.probe)
        except BackendError as exc:
            self.warnings.append(f"probe failed at position {position}: {exc}")
            return
        self.probe_tokens += result.tokens_used
        confidence = entropy_confidence(result.distributions, adapt.entropy_top_k)
        self.scores.append(confidence)
        trend = compute_trend(self.scores, adapt.trend_window)
        threshold = adaptive_threshold(confidence, trend, self.mode, adapt)
        self.suppression_prob = suppression_probability(
            confidence, threshold, adapt.ramp_exponent)
        self.checkpoints.append(CheckpointRecord(
            index=len(self.checkpoints) + 1,
            position=position,
            tentative_answer=result.answer,
            confidence=confidence,
            trend=trend,
            threshold=threshold,
            suppression_prob=self.suppression_prob,
            probe_tokens_used=result.tokens_used,
        ))


class StaticGate:
    """Constant suppression probability, no probing. Baseline use only."""

    def __init__(self, probability: float):
        if not (0.0 <= probability <= 1.0):
            raise ConfigurationError("static probability must lie in [0, 1]")
        self.suppression_prob = probability
        self.checkpoints: list[CheckpointRecord] = []
        self.warnings: list[str] = []
        self.probe_tokens = 0

    def checkpoint(self, context: str, backend: GeneratorBackend, position: int) -> None:
        return


class _LoopOutcome:
    __slots__ = ("text", "emitted", "stop", "events", "error")

    def __init__(self, text: str, emitted: int, stop: StopReason,
                 events: list[SuppressionEvent], error: str | None):
        self.text = text
        self.emitted = emitted
        self.stop = stop
        self.events = events
        self.error = error


def _decode_loop(prompt: str, backend: GeneratorBackend, *, max_tokens: int,
                 triggers: TriggerSet, rng: random.Random,
                 gate, checkpoint_interval: int) -> _LoopOutcome:
    context = prompt
    emitted = 0
    events: list[SuppressionEvent] = []
    stop = StopReason.TOKEN_CAP
    error: str | None = None
    while emitted < max_tokens:
        if gate is not None and emitted > 0 and emitted % checkpoint_interval == 0:
            gate.checkpoint(context, backend, emitted)
        try:
            dist = backend.next_distribution(context)
        except BackendError as exc:
            stop = StopReason.ERROR
            error = str(exc)
            break
        if dist.is_eos:
            stop = StopReason.EOS
            break
        token = sample(dist, rng)
        prob = gate.suppression_prob if gate is not None else 0.0
        if prob > 0.0 and detect_trigger(token, triggers):
            draw = rng.random()
            if draw < prob:
                replacement, used_fallback = resample_non_trigger(dist, triggers, rng)
                events.append(SuppressionEvent(
                    position=emitted,
                    suppressed_token=token,
                    replacement_token=replacement,
                    suppression_prob=prob,
                    random_draw=draw,
                    used_fallback=used_fallback,
                ))
                token = replacement
        # checked after suppression: a resample may land on end of sequence
        if token == EOS_TOKEN:
            stop = StopReason.EOS
            break
        context += token
        emitted += 1
    return _LoopOutcome(context[len(prompt):], emitted, stop, events, error)


def majority_vote(votes: Sequence[tuple[str, float]]) -> str:
    """Most common answer; ties break by higher best confidence, then order."""
    if not votes:
        raise ConfigurationError("majority vote needs at least one sample")
    counts = Counter(answer for answer, _ in votes)
    best_conf: dict[str, float] = {}
    first_seen: dict[str, int] = {}
    for idx, (answer, conf) in enumerate(votes):
        if answer not in first_seen:
            first_seen[answer] = idx
        best_conf[answer] = max(best_conf.get(answer, 0.0), conf)
    return min(counts, key=lambda a: (-counts[a], -best_conf[a], first_seen[a]))


def _latency_for(backend: GeneratorBackend, tokens: int, wall: float) -> float:
    simulate = getattr(backend, "simulated_latency", None)
    if simulate is not None:
        return simulate(tokens)
    return wall


def _ars_single(query: Query, backend: GeneratorBackend, cfg: SuppressionConfig,
                mode: ReasoningMode, difficulty: float, seed: int) -> GenerationTrace:
    prompt = build_prompt(mode, query, query.dataset_kind)
    rng = random.Random(seed)
    gate = AdaptiveGate(mode.tag, cfg)
    started = time.perf_counter()
    outcome = _decode_loop(
        prompt, backend, max_tokens=cfg.max_tokens, triggers=cfg.trigger_set,
        rng=rng, gate=gate, checkpoint_interval=cfg.checkpoint_interval)
    wall = time.perf_counter() - started
    total = outcome.emitted + gate.probe_tokens
    return GenerationTrace(
        query_id=query.id,
        mode=mode.tag,
        difficulty=difficulty,
        text=outcome.text,
        emitted_tokens=outcome.emitted,
        probe_tokens=gate.probe_tokens,
        aux_tokens=0,
        checkpoints=tuple(gate.checkpoints),
        suppression_events=tuple(outcome.events),
        final_answer=extract_final_answer(outcome.text, query.dataset_kind),
        stop_reason=outcome.stop,
        wall_latency=_latency_for(backend, total, wall),
        rng_seed=seed,
        warnings=tuple(gate.warnings),
        error=outcome.error,
    )


def _deep_generate(query: Query, backend: GeneratorBackend, cfg: SuppressionConfig,
                   mode: ReasoningMode, difficulty: float) -> GenerationTrace:
    """Self-consistency: sc_k independent samples, majority-voted answer.

    The returned trace carries the winning sample's text and events;
    the non-winning samples' emissions are accounted as auxiliary tokens
    so the per-sample cap still bounds the visible generation.
    """
    policy = mode.params
    assert isinstance(policy, DeepReflectPolicy)
    runs: list[GenerationTrace] = []
    for j in range(policy.sc_k):
        seed = derive_seed(cfg.rng_seed, query.id, "sc", j)
        runs.append(_ars_single(query, backend, cfg, mode, difficulty, seed))
    votes = []
    for trace in runs:
        conf = trace.checkpoints[-1].confidence if trace.checkpoints else 0.0
        votes.append((trace.final_answer, conf))
    winner_answer = majority_vote(votes)
    winner = next(t for t in runs if t.final_answer == winner_answer)
    aux = sum(t.emitted_tokens for t in runs if t is not winner)
    probe = sum(t.probe_tokens for t in runs)
    warnings = tuple(w for t in runs for w in t.warnings)
    return replace(
        winner,
        final_answer=winner_answer,
        aux_tokens=aux,
        probe_tokens=probe,
        wall_latency=sum(t.wall_latency for t in runs),
        warnings=warnings,
        rng_seed=derive_seed(cfg.rng_seed, query.id, "sc", 0),
    )


def generate_with_ars(query: Query, backend: GeneratorBackend,
                      cfg: SuppressionConfig | None = None,
                      lexicon: DifficultyLexicon = DEFAULT_LEXICON) -> GenerationTrace:
    """Full adaptive pipeline: difficulty, mode schedule, gated decoding."""
    if cfg is None:
        cfg = SuppressionConfig()
    if not query.text.strip():
        raise ConfigurationError("query text must be non-empty")
    score = heuristic_difficulty(query, lexicon)
    low_cut, high_cut = cfg.difficulty_cuts
    mode = schedule_mode(score.value, low_cut, high_cut)
    if mode.tag is ModeTag.DEEP:
        return _deep_generate(query, backend, cfg, mode, score.value)
    seed = derive_seed(cfg.rng_seed, query.id)
    return _ars_single(query, backend, cfg, mode, score.value, seed)
