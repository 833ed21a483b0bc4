"""Synthetic script families and the empirical token-overhead bound check.

Each synthetic instance has a known optimal solution length: the token
count at which its answer is complete. Redundant reflection loops sit
after that point, so any tokens an adaptive run spends beyond the optimum
are measurable overhead. The lab fits a single overhead ratio across a
family and checks how many instances stay within

    tokens(x) <= (1 + fitted_ratio) * optimal(x) + c * sqrt(ln r_max)

where r_max caps reflection rounds per problem. The additive slack grows
only with the root-log of r_max, so on families where suppression kicks
in within one checkpoint interval of the answer, the fitted ratio drops
to zero and the whole family lands inside the bound.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .backends import ProbeStyle, ReflectionLoop, ScriptedBackend, ScriptedReasonerSpec
from .difficulty import DatasetKind, Query
from .engine import SuppressionConfig, derive_seed, generate_with_ars
from .errors import ConfigurationError
from .harness import BaselineConfig, BaselineKind, run_baseline

# Filler vocabularies: space-led, digit-free, and disjoint from trigger
# words, so scripts parse unambiguously and never leak numbers into the
# answer extractor.
_FILLER = (
    " along", " the", " ledger", " we", " tally", " each", " partial",
    " step", " with", " care", " then", " carry", " every", " term",
    " toward", " its", " place",
)
_BODY_FILLER = (
    " checking", " that", " nothing", " was", " dropped", " from",
    " this", " line", " before", " moving", " on", " again",
)
_TRIGGERS_CYCLE = ("Wait", "But", "Alternatively")


def _filler(count: int, offset: int = 0) -> list[str]:
    return [_FILLER[(offset + i) % len(_FILLER)] for i in range(count)]


def _body(count: int, offset: int = 0) -> tuple[str, ...]:
    return tuple(_BODY_FILLER[(offset + i) % len(_BODY_FILLER)] for i in range(count))


def _answer_tokens(gold: str) -> list[str]:
    return [" Final", " answer:", " \\boxed{", gold, "}."]


@dataclass(frozen=True)
class SyntheticFamilySpec:
    """Parameters of the main synthetic family.

    Loops are appended after the optimal point, the first one a full
    checkpoint interval past it, so a correctly gated run has certainty
    in hand before the first redundancy decision.
    """

    n_instances: int = 100
    optimal_range: tuple[int, int] = (50, 400)
    loop_length: int = 40
    loops_per_instance: int = 3
    r_max: int = 64
    seed: int = 0
    emit_prob: float = 0.7
    loop_gap: int | None = None
    per_token_latency: float = 0.01

    def __post_init__(self) -> None:
        lo, hi = self.optimal_range
        if lo < 6 or hi < lo:
            raise ConfigurationError("optimal_range needs 6 <= lo <= hi")
        if self.n_instances < 1:
            raise ConfigurationError("need at least one instance")
        if self.loop_length < 1 or self.loops_per_instance < 0:
            raise ConfigurationError("loop shape parameters must be positive")
        if self.r_max < 1:
            raise ConfigurationError("r_max must be positive")
        if not (0.0 < self.emit_prob <= 1.0):
            raise ConfigurationError("emit_prob must lie in (0, 1]")
        if self.loop_gap is not None and self.loop_gap < 1:
            raise ConfigurationError("loop_gap must be positive when set")
        if self.loops_per_instance > self.r_max:
            raise ConfigurationError("loops_per_instance cannot exceed r_max")


def synth_instances(family: SyntheticFamilySpec, *,
                    checkpoint_interval: int = 64) -> list[ScriptedReasonerSpec]:
    """Generate the family: known optimum, refiring loops after it."""
    if checkpoint_interval < 1:
        raise ConfigurationError("checkpoint interval must be positive")
    gap = family.loop_gap if family.loop_gap is not None else checkpoint_interval + 1
    lo, hi = family.optimal_range
    specs: list[ScriptedReasonerSpec] = []
    for i in range(family.n_instances):
        rng = random.Random(derive_seed(family.seed, "family", i))
        optimal = rng.randint(lo, hi)
        gold = str(1009 + 7 * i)
        solution = _filler(optimal - 5, offset=i)
        solution += _answer_tokens(gold)
        solution += _filler(gap + family.loops_per_instance, offset=i + 3)
        loops = tuple(
            ReflectionLoop(
                position=optimal + gap + j,
                trigger_word=_TRIGGERS_CYCLE[j % len(_TRIGGERS_CYCLE)],
                body_tokens=_body(family.loop_length, offset=j),
                emit_prob=family.emit_prob,
                max_fires=None,
            )
            for j in range(family.loops_per_instance)
        )
        specs.append(ScriptedReasonerSpec(
            instance_id=f"synthetic-{family.seed}-{i}",
            solution_tokens=tuple(solution),
            answer_known_at=optimal,
            gold_answer=gold,
            loops=loops,
            pre_solution_probe_entropy=ProbeStyle.UNIFORM_TOPK,
            per_token_latency=family.per_token_latency,
        ))
    return specs


def reflection_required_instances(n: int, seed: int = 0, *,
                                  checkpoint_interval: int = 64) -> list[ScriptedReasonerSpec]:
    """Scripts whose single reflection carries the correct answer.

    The scripted body rewrites a wrong boxed value with the right one, so
    blanket trigger suppression destroys accuracy while certainty-gated
    suppression stays out of the way: the probe only warms up at the loop
    position itself, after the trigger has already been emitted.
    """
    specs: list[ScriptedReasonerSpec] = []
    for i in range(n):
        rng = random.Random(derive_seed(seed, "reflect", i))
        anchor = rng.randint(70, 120)
        while anchor % checkpoint_interval == 0:
            anchor += 1
        gold = str(503 + 9 * i)
        solution = _filler(anchor - 5, offset=i) + _answer_tokens("0")
        body = _body(5, offset=i) + tuple(_answer_tokens(gold))
        loop = ReflectionLoop(
            position=anchor,
            trigger_word="Wait",
            body_tokens=body,
            emit_prob=1.0,
            max_fires=1,
        )
        specs.append(ScriptedReasonerSpec(
            instance_id=f"reflect-{seed}-{i}",
            solution_tokens=tuple(solution),
            answer_known_at=anchor,
            gold_answer=gold,
            loops=(loop,),
            pre_solution_probe_entropy=ProbeStyle.UNIFORM_TOPK,
            per_token_latency=0.01,
        ))
    return specs


def low_certainty_instances(n: int, seed: int = 0) -> list[ScriptedReasonerSpec]:
    """Scripts whose probes stay maximally uncertain until the very end.

    Confidence sits at zero through every checkpoint, so a correctly
    gated run must reproduce ungated decoding token for token, loops and
    all.
    """
    specs: list[ScriptedReasonerSpec] = []
    for i in range(n):
        rng = random.Random(derive_seed(seed, "lowcert", i))
        length = rng.randint(90, 150)
        gold = str(307 + 11 * i)
        solution = _filler(length - 5, offset=i) + _answer_tokens(gold)
        loops = (
            ReflectionLoop(
                position=length // 3,
                trigger_word="Wait",
                body_tokens=_body(12, offset=i),
                emit_prob=0.7,
                max_fires=None,
            ),
            ReflectionLoop(
                position=(2 * length) // 3,
                trigger_word="But",
                body_tokens=_body(12, offset=i + 4),
                emit_prob=0.7,
                max_fires=None,
            ),
        )
        specs.append(ScriptedReasonerSpec(
            instance_id=f"lowcert-{seed}-{i}",
            solution_tokens=tuple(solution),
            answer_known_at=length,
            gold_answer=gold,
            loops=loops,
            pre_solution_probe_entropy=ProbeStyle.UNIFORM_TOPK,
            per_token_latency=0.01,
        ))
    return specs


def query_for_script(spec: ScriptedReasonerSpec) -> Query:
    """Wrap a script in a short query that schedules the fast mode."""
    return Query(
        id=spec.instance_id,
        text=f"Work through synthetic drill {spec.instance_id} and report the final value.",
        gold_answer=spec.gold_answer,
        dataset_kind=DatasetKind.PLAIN,
    )


@dataclass(frozen=True)
class InstanceOutcome:
    instance_id: str
    optimal_tokens: int
    ars_tokens: int
    vanilla_tokens: int


@dataclass(frozen=True)
class BoundReport:
    fitted_overhead_ratio: float
    slack_term: float
    fraction_within_bound: float
    allowed_miss_fraction: float
    meets_target: bool
    slack_coefficient: float
    r_max: int
    per_instance: tuple[InstanceOutcome, ...]


def empirical_bound_check(results: list[InstanceOutcome],
                          slack_coefficient: float = 10.0,
                          allowed_miss_fraction: float = 0.1, *,
                          r_max: int = 64) -> BoundReport:
    """Fit the family overhead ratio and test it against the slack bound.

    The ratio is the mean slack-adjusted relative overhead, floored at
    zero. An instance is within bound when its adaptive token count stays
    under (1 + ratio) * optimal + slack.
    """
    if not results:
        raise ConfigurationError("bound check needs at least one instance")
    if slack_coefficient < 0.0:
        raise ConfigurationError("slack coefficient must be non-negative")
    if not (0.0 <= allowed_miss_fraction < 1.0):
        raise ConfigurationError("allowed miss fraction must lie in [0, 1)")
    if r_max < 1:
        raise ConfigurationError("r_max must be positive")
    if any(out.optimal_tokens <= 0 for out in results):
        raise ConfigurationError("every instance needs a positive optimal length")
    slack = slack_coefficient * math.sqrt(math.log(r_max)) if r_max > 1 else 0.0
    excess = [(out.ars_tokens - slack) / out.optimal_tokens - 1.0 for out in results]
    fitted = max(0.0, sum(excess) / len(excess))
    within = sum(
        1 for out in results
        if out.ars_tokens <= (1.0 + fitted) * out.optimal_tokens + slack + 1e-9
    )
    fraction = within / len(results)
    return BoundReport(
        fitted_overhead_ratio=fitted,
        slack_term=slack,
        fraction_within_bound=fraction,
        allowed_miss_fraction=allowed_miss_fraction,
        meets_target=fraction >= 1.0 - allowed_miss_fraction,
        slack_coefficient=slack_coefficient,
        r_max=r_max,
        per_instance=tuple(results),
    )


def run_bound_lab(family: SyntheticFamilySpec | None = None, *,
                  checkpoint_interval: int = 8,
                  slack_coefficient: float = 10.0,
                  allowed_miss_fraction: float = 0.1,
                  max_tokens: int = 1200,
                  engine_seed: int = 0) -> BoundReport:
    """Run the family end to end and check the empirical bound.

    The default interval is tighter than the benchmark default because
    the bound concerns per-instance overhead, which shrinks with the gap
    between knowing the answer and the next checkpoint.
    """
    if family is None:
        family = SyntheticFamilySpec()
    gap = family.loop_gap if family.loop_gap is not None else checkpoint_interval + 1
    longest = family.optimal_range[1] + gap + family.loops_per_instance
    if longest > max_tokens:
        raise ConfigurationError(
            f"family scripts reach {longest} tokens, beyond the {max_tokens} cap")
    cfg = SuppressionConfig(checkpoint_interval=checkpoint_interval,
                            max_tokens=max_tokens, rng_seed=engine_seed)
    vanilla = BaselineConfig(kind=BaselineKind.VANILLA)
    outcomes: list[InstanceOutcome] = []
    for spec in synth_instances(family, checkpoint_interval=checkpoint_interval):
        query = query_for_script(spec)
        ars_trace = generate_with_ars(
            query, ScriptedBackend(spec, probe_marker=cfg.probe.probe_prompt), cfg)
        vanilla_trace = run_baseline(
            query, ScriptedBackend(spec, probe_marker=cfg.probe.probe_prompt), vanilla, cfg)
        outcomes.append(InstanceOutcome(
            instance_id=spec.instance_id,
            optimal_tokens=spec.answer_known_at,
            ars_tokens=ars_trace.emitted_tokens,
            vanilla_tokens=vanilla_trace.emitted_tokens,
        ))
    return empirical_bound_check(
        outcomes, slack_coefficient, allowed_miss_fraction, r_max=family.r_max)
