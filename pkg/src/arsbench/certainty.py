"""Checkpoint certainty estimation and threshold adaptation.

At fixed intervals the decoder branches off a short greedy probe asking
the backend for its current best answer. The probe's token distributions
feed a normalized-entropy confidence score; a short linear trend over the
recent scores then lowers the suppression threshold when confidence is
rising. None of this touches model weights: it is all decode-time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .backends import (
    DEFAULT_PROBE_MARKER,
    EOS_TOKEN,
    GeneratorBackend,
    TokenDistribution,
    greedy_token,
    sample,
)
from .difficulty import ModeTag
from .errors import ConfigurationError, InvalidDistributionError


@dataclass(frozen=True)
class ProbeConfig:
    """How checkpoint probes are decoded.

    probe_prompt: appended to the context to elicit the tentative answer
    probe_budget: hard cap on probe tokens per checkpoint
    probe_greedy: probes are deterministic by default; sampling needs an rng
    """

    probe_prompt: str = DEFAULT_PROBE_MARKER
    probe_budget: int = 16
    probe_greedy: bool = True

    def __post_init__(self) -> None:
        if not self.probe_prompt:
            raise ConfigurationError("probe prompt must be non-empty")
        if self.probe_budget < 1:
            raise ConfigurationError("probe budget must be positive")


@dataclass(frozen=True)
class CheckpointRecord:
    """One checkpoint's measurements, indexed from 1 in emission order."""

    index: int
    position: int
    tentative_answer: str
    confidence: float
    trend: float
    threshold: float
    suppression_prob: float
    probe_tokens_used: int


@dataclass(frozen=True)
class AdaptationConfig:
    """Mode-dependent base thresholds and the trend adaptation rule.

    Bases must be ordered fast <= moderate <= deep: an easy problem should
    tolerate suppression at lower confidence than a hard one.
    """

    base_thresholds: dict[ModeTag, float] = field(default_factory=lambda: {
        ModeTag.FAST: 0.60,
        ModeTag.MOD: 0.75,
        ModeTag.DEEP: 0.85,
    })
    trend_window: int = 3
    trend_gain: float = 0.5
    threshold_floor: float = 0.30
    ramp_exponent: float = 1.0
    entropy_top_k: int = 20

    def __post_init__(self) -> None:
        missing = [tag for tag in ModeTag if tag not in self.base_thresholds]
        if missing:
            raise ConfigurationError(f"base thresholds missing modes: {missing}")
        fast = self.base_thresholds[ModeTag.FAST]
        mod = self.base_thresholds[ModeTag.MOD]
        deep = self.base_thresholds[ModeTag.DEEP]
        if not (fast <= mod <= deep):
            raise ConfigurationError("base thresholds must be ordered fast <= moderate <= deep")
        for tag, value in self.base_thresholds.items():
            if not (0.0 < value <= 0.99):
                raise ConfigurationError(f"base threshold for {tag} outside (0, 0.99]")
        if not (0.0 <= self.threshold_floor <= fast):
            raise ConfigurationError("threshold floor must lie in [0, min base]")
        if self.trend_window < 2:
            raise ConfigurationError("trend window must be at least 2")
        if self.trend_gain < 0.0:
            raise ConfigurationError("trend gain must be non-negative")
        if self.ramp_exponent <= 0.0:
            raise ConfigurationError("ramp exponent must be positive")
        if self.entropy_top_k < 2:
            raise ConfigurationError("entropy top_k must be at least 2")


class ProbeResult(NamedTuple):
    answer: str
    distributions: tuple[TokenDistribution, ...]
    tokens_used: int


def probe_answer(context: str, backend: GeneratorBackend, cfg: ProbeConfig,
                 rng=None) -> ProbeResult:
    """Decode a short answer probe off the current context.

    The probe branch never feeds back into the main generation. Decoding
    stops at end of sequence, at a newline, or at the budget. Returned
    distributions cover the tokens that contributed answer text, which is
    what the confidence estimate should be conditioned on.
    """
    if not context:
        raise ConfigurationError("probe context must be non-empty")
    if not cfg.probe_greedy and rng is None:
        raise ConfigurationError("sampled probes need an rng")
    probe_context = context + cfg.probe_prompt
    pieces: list[str] = []
    dists: list[TokenDistribution] = []
    used = 0
    for _ in range(cfg.probe_budget):
        dist = backend.next_distribution(probe_context)
        used += 1
        if dist.is_eos:
            break
        token = greedy_token(dist) if cfg.probe_greedy else sample(dist, rng)
        if token == EOS_TOKEN:
            break
        if "\n" in token:
            head = token.split("\n", 1)[0]
            if head:
                pieces.append(head)
                dists.append(dist)
            break
        pieces.append(token)
        dists.append(dist)
        probe_context += token
    return ProbeResult("".join(pieces).strip(), tuple(dists), used)


def entropy_confidence(dists: Sequence[TokenDistribution], k_top: int = 20) -> float:
    """Confidence as one minus mean normalized top-k entropy, clamped to [0, 1].

    Each distribution's entropy is computed over its k_top largest
    probabilities renormalized to one, then divided by ln(k_top). No
    distributions means no evidence: returns 0.
    """
    if k_top < 2:
        raise ConfigurationError("k_top must be at least 2")
    if not dists:
        return 0.0
    scale = math.log(k_top)
    normalized: list[float] = []
    for dist in dists:
        probs = sorted((p for _, p in dist.candidates), reverse=True)[:k_top]
        total = sum(probs)
        if total <= 0.0:
            raise InvalidDistributionError("distribution has no probability mass")
        probs = [p / total for p in probs]
        entropy = -sum(p * math.log(p) for p in probs if p > 0.0)
        normalized.append(entropy / scale)
    confidence = 1.0 - sum(normalized) / len(normalized)
    return min(1.0, max(0.0, confidence))


def compute_trend(scores: Sequence[float], window: int = 3) -> float:
    """Least-squares slope of the last ``window`` confidence scores.

    Fewer than two points cannot define a slope and yield 0.
    """
    if window < 2:
        raise ConfigurationError("trend window must be at least 2")
    recent = np.asarray(scores[-window:], dtype=float)
    if recent.size < 2:
        return 0.0
    steps = np.arange(recent.size, dtype=float)
    steps -= steps.mean()
    denom = float(np.dot(steps, steps))
    return float(np.dot(steps, recent - recent.mean()) / denom)


def adaptive_threshold(confidence: float, trend: float, mode: ModeTag,
                       cfg: AdaptationConfig) -> float:
    """Suppression threshold for the current checkpoint.

    A rising confidence trend lowers the mode's base threshold by
    gain * trend, never below the floor; a falling trend leaves the base
    untouched. Capped at 0.99 so the ramp denominator stays positive.
    """
    if not (0.0 <= confidence <= 1.0):
        raise ConfigurationError(f"confidence {confidence} outside [0, 1]")
    base = cfg.base_thresholds[mode]
    lowered = base - cfg.trend_gain * max(0.0, trend)
    return min(0.99, max(cfg.threshold_floor, lowered))


def suppression_probability(confidence: float, threshold: float,
                            ramp_exponent: float = 1.0) -> float:
    """Probability of suppressing a redundancy trigger at this confidence.

    Zero at or below the threshold, then a power ramp on the excess
    renormalized by the remaining headroom, saturating at one.
    """
    if not (0.0 <= confidence <= 1.0):
        raise ConfigurationError(f"confidence {confidence} outside [0, 1]")
    if not (0.0 <= threshold < 1.0):
        raise ConfigurationError(f"threshold {threshold} outside [0, 1)")
    if ramp_exponent <= 0.0:
        raise ConfigurationError("ramp exponent must be positive")
    excess = confidence - threshold
    if excess <= 0.0:
        return 0.0
    return min(1.0, (excess / (1.0 - threshold)) ** ramp_exponent)
