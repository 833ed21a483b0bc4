"""The adaptive decoding controller."""

from __future__ import annotations

import random

import pytest

from arsbench.backends import (
    EOS_TOKEN,
    FALLBACK_TOKEN,
    ReflectionLoop,
    ScriptedBackend,
    ScriptedReasonerSpec,
    TokenDistribution,
    one_hot,
)
from arsbench.difficulty import ModeTag, Query
from arsbench.engine import (
    DEFAULT_TRIGGER_WORDS,
    StaticGate,
    StopReason,
    SuppressionConfig,
    TriggerSet,
    derive_seed,
    detect_trigger,
    generate_with_ars,
    majority_vote,
    resample_non_trigger,
)
from arsbench.errors import BackendError, ConfigurationError

TRIGGERS = TriggerSet()


def plain_spec(n=10, *, gold="7", boxed=True):
    tokens = [f" w{i}" for i in range(n - 2)] if boxed else [f" w{i}" for i in range(n)]
    if boxed:
        tokens += [" \\boxed{" + gold, "}."]
    return ScriptedReasonerSpec(
        instance_id="plain", solution_tokens=tuple(tokens),
        answer_known_at=len(tokens), gold_answer=gold)


def run(spec, *, query_text="short question", **cfg_kwargs):
    cfg = SuppressionConfig(**cfg_kwargs)
    return generate_with_ars(Query(id=spec.instance_id, text=query_text),
                             ScriptedBackend(spec), cfg)


class TestTriggerSet:
    def test_defaults(self):
        assert "Wait" in DEFAULT_TRIGGER_WORDS
        assert TriggerSet().match_case_sensitive

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            TriggerSet(words=())
        with pytest.raises(ConfigurationError):
            TriggerSet(words=("Wait ",))
        with pytest.raises(ConfigurationError):
            TriggerSet(words=("",))


class TestDetectTrigger:
    @pytest.mark.parametrize("token,expected", [
        (" Wait", True),
        ("Wait,", True),
        ("Wait", True),
        ("Waiting", False),
        (" However", True),
        ("But...", True),
        (" so", False),
        ("\n", False),
        (EOS_TOKEN, False),
        (" wait", False),  # case-sensitive by default
    ])
    def test_word_boundary_matching(self, token, expected):
        assert detect_trigger(token, TRIGGERS) is expected

    def test_case_insensitive_option(self):
        loose = TriggerSet(match_case_sensitive=False)
        assert detect_trigger(" wait", loose)
        assert detect_trigger(" HOWEVER,", loose)


class TestResampleNonTrigger:
    def test_survivors_split_the_mass_evenly(self):
        dist = TokenDistribution((("Wait", 0.5), (" So", 0.25), (" Then", 0.25)))
        rng = random.Random(0)
        n = 10_000
        counts = {" So": 0, " Then": 0}
        for _ in range(n):
            token, fallback = resample_non_trigger(dist, TRIGGERS, rng)
            assert not fallback
            counts[token] += 1
        assert abs(counts[" So"] - n / 2) < 3 * (n * 0.25) ** 0.5

    def test_single_survivor_is_certain(self):
        dist = TokenDistribution((("Wait", 0.6), (" Thus", 0.4)))
        for seed in range(5):
            assert resample_non_trigger(dist, TRIGGERS, random.Random(seed)) == (" Thus", False)

    def test_all_trigger_mass_falls_back_to_newline(self):
        dist = TokenDistribution((("Wait", 1.0),))
        assert resample_non_trigger(dist, TRIGGERS, random.Random(0)) == (FALLBACK_TOKEN, True)

    def test_negligible_survivor_mass_also_falls_back(self):
        dist = TokenDistribution((("Wait", 1.0 - 1e-12), (" x", 1e-12)), truncated=True)
        token, fallback = resample_non_trigger(dist, TRIGGERS, random.Random(0))
        assert (token, fallback) == (FALLBACK_TOKEN, True)


class TestDeriveSeed:
    def test_frozen_value(self):
        assert derive_seed(0, "q1") == 14813249367029252116

    def test_stable_and_distinct(self):
        assert derive_seed(0, "q1") == derive_seed(0, "q1")
        assert derive_seed(0, "q1") != derive_seed(0, "q2")
        assert derive_seed(0, "q1") != derive_seed(1, "q1")
        assert derive_seed(0, "q1", "sc", 0) != derive_seed(0, "q1", "sc", 1)


class TestPlainGeneration:
    def test_script_replayed_verbatim(self):
        spec = plain_spec(10)
        trace = run(spec)
        assert trace.text == "".join(spec.solution_tokens)
        assert trace.emitted_tokens == 10
        assert trace.stop_reason is StopReason.EOS
        assert trace.final_answer == "7"
        assert trace.error is None
        assert trace.mode is ModeTag.FAST

    @pytest.mark.parametrize("interval,expected_positions", [
        (3, [3, 6, 9]),
        (5, [5, 10]),
        (4, [4, 8]),
    ])
    def test_checkpoint_cadence(self, interval, expected_positions):
        trace = run(plain_spec(10), checkpoint_interval=interval)
        assert [c.position for c in trace.checkpoints] == expected_positions
        assert [c.index for c in trace.checkpoints] == list(
            range(1, len(expected_positions) + 1))

    def test_probe_token_accounting(self):
        trace = run(plain_spec(10), checkpoint_interval=3)
        assert trace.probe_tokens == sum(c.probe_tokens_used for c in trace.checkpoints)
        # each probe decodes one answer token and then sees end of sequence
        assert trace.probe_tokens == 2 * len(trace.checkpoints)
        assert trace.total_tokens == trace.emitted_tokens + trace.probe_tokens

    def test_blank_query_rejected(self):
        with pytest.raises(ConfigurationError):
            run(plain_spec(10), query_text="   ")

    def test_repeat_runs_are_identical(self):
        first = run(plain_spec(30), checkpoint_interval=8)
        second = run(plain_spec(30), checkpoint_interval=8)
        assert first == second


def looped_spec(*, n=30, anchor=12, emit_prob=0.7, known_at=4, body=(" b1", " b2", " b3")):
    tokens = tuple(f" w{i}" for i in range(n))
    loop = ReflectionLoop(position=anchor, trigger_word=" Wait",
                          body_tokens=body, emit_prob=emit_prob)
    return ScriptedReasonerSpec(
        instance_id="looped", solution_tokens=tokens,
        answer_known_at=known_at, gold_answer="7", loops=(loop,))


class TestSuppression:
    def test_hot_checkpoint_turns_suppression_on(self):
        trace = run(looped_spec(), checkpoint_interval=8)
        hot = [c for c in trace.checkpoints if c.position >= 8]
        assert all(c.confidence == 1.0 for c in hot)
        assert all(c.suppression_prob == 1.0 for c in hot)
        assert all(c.tentative_answer == "7" for c in hot)

    @pytest.mark.parametrize("seed", range(5))
    def test_suppressed_loop_emits_the_plain_script(self, seed):
        spec = looped_spec()
        trace = run(spec, checkpoint_interval=8, rng_seed=seed)
        assert trace.emitted_tokens == 30
        assert trace.text == "".join(spec.solution_tokens)
        assert " Wait" not in trace.text
        for event in trace.suppression_events:
            assert event.suppressed_token == " Wait"
            assert event.replacement_token == " w12"
            assert not event.used_fallback
            assert event.random_draw < event.suppression_prob == 1.0

    def test_certain_trigger_is_skipped_via_fallback(self):
        spec = looped_spec(emit_prob=1.0)
        trace = run(spec, checkpoint_interval=8)
        assert trace.stop_reason is StopReason.EOS
        assert trace.emitted_tokens == 31  # one fallback newline on top
        assert trace.text == (
            "".join(spec.solution_tokens[:12]) + FALLBACK_TOKEN
            + "".join(spec.solution_tokens[12:]))
        (event,) = trace.suppression_events
        assert event.used_fallback
        assert event.replacement_token == FALLBACK_TOKEN

    def test_cold_certain_trigger_spins_to_the_cap(self):
        # the probe never commits, suppression stays off, the loop refires
        spec = looped_spec(emit_prob=1.0, known_at=30)
        trace = run(spec, checkpoint_interval=8, max_tokens=50)
        assert trace.stop_reason is StopReason.TOKEN_CAP
        assert trace.emitted_tokens == 50
        assert trace.text.count(" Wait") > 1

    def test_suppressed_trigger_can_resolve_to_end_of_sequence(self):
        tokens = tuple(f" w{i}" for i in range(20))
        spec = ScriptedReasonerSpec(
            instance_id="end-loop", solution_tokens=tokens,
            answer_known_at=5, gold_answer="7",
            loops=(ReflectionLoop(position=20, trigger_word=" Wait",
                                  body_tokens=(" again",), emit_prob=0.7),))
        trace = run(spec, checkpoint_interval=8, rng_seed=0)
        assert trace.stop_reason is StopReason.EOS
        assert EOS_TOKEN not in trace.text
        assert trace.error is None
        (event,) = trace.suppression_events
        assert event.replacement_token == EOS_TOKEN

    def test_suppression_shortens_against_the_unsuppressed_run(self):
        body = tuple(f" fb{i}" for i in range(20))
        early = looped_spec(emit_prob=1.0, n=100, anchor=50, known_at=10, body=body)
        never = looped_spec(emit_prob=1.0, n=100, anchor=50, known_at=100, body=body)
        gated = run(early, checkpoint_interval=16, max_tokens=400)
        cold = run(never, checkpoint_interval=16, max_tokens=400)
        assert gated.emitted_tokens < cold.emitted_tokens
        assert gated.stop_reason is StopReason.EOS
        assert cold.stop_reason is StopReason.TOKEN_CAP


class _FailingBackend:
    """Emits scripted tokens, then raises."""

    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.calls = 0

    def next_distribution(self, context):
        if self.calls >= len(self.tokens):
            raise BackendError("backend exploded")
        token = self.tokens[self.calls]
        self.calls += 1
        return one_hot(token)


class _ProbeFailingBackend:
    """Delegates generation but refuses every probe branch."""

    def __init__(self, inner, probe_marker="\nAnswer so far: "):
        self.inner = inner
        self.descriptor = inner.descriptor
        self.probe_marker = probe_marker

    def next_distribution(self, context):
        if self.probe_marker in context:
            raise BackendError("probe endpoint down")
        return self.inner.next_distribution(context)

    def simulated_latency(self, tokens):
        return self.inner.simulated_latency(tokens)


class TestFailureHandling:
    def test_backend_failure_stops_with_error(self):
        backend = _FailingBackend([" a", " b", " c"])
        cfg = SuppressionConfig(checkpoint_interval=1000)
        trace = generate_with_ars(Query(id="f", text="short question"), backend, cfg)
        assert trace.stop_reason is StopReason.ERROR
        assert trace.emitted_tokens == 3
        assert trace.text == " a b c"
        assert trace.error == "backend exploded"

    def test_probe_failure_warns_and_continues(self):
        backend = _ProbeFailingBackend(ScriptedBackend(plain_spec(20)))
        cfg = SuppressionConfig(checkpoint_interval=6)
        trace = generate_with_ars(Query(id="plain", text="short question"), backend, cfg)
        assert trace.stop_reason is StopReason.EOS
        assert trace.emitted_tokens == 20
        assert trace.checkpoints == ()
        assert len(trace.warnings) == 3
        assert all("probe failed" in w for w in trace.warnings)


class TestStaticGate:
    def test_probability_bounds(self):
        StaticGate(0.0)
        StaticGate(1.0)
        with pytest.raises(ConfigurationError):
            StaticGate(1.5)
        with pytest.raises(ConfigurationError):
            StaticGate(-0.1)


class TestMajorityVote:
    def test_plain_majority(self):
        assert majority_vote([("a", 0.1), ("b", 0.9), ("a", 0.2)]) == "a"

    def test_count_tie_breaks_on_confidence(self):
        assert majority_vote([("a", 0.1), ("b", 0.9)]) == "b"

    def test_full_tie_keeps_first_seen(self):
        assert majority_vote([("b", 0.5), ("a", 0.5)]) == "b"

    def test_empty_votes_rejected(self):
        with pytest.raises(ConfigurationError):
            majority_vote([])


DEEP_QUERY_TEXT = (" ".join(["prove integral limit"] * 30) + " " + "+" * 10)


class TestDeepMode:
    def test_query_is_scheduled_deep(self):
        from arsbench.difficulty import heuristic_difficulty, schedule_mode
        score = heuristic_difficulty(Query(id="d", text=DEEP_QUERY_TEXT))
        assert schedule_mode(score.value).tag is ModeTag.DEEP

    def test_self_consistency_accounting(self):
        spec = plain_spec(20)
        backend = ScriptedBackend(spec)
        cfg = SuppressionConfig(checkpoint_interval=8)
        trace = generate_with_ars(Query(id="deep-q", text=DEEP_QUERY_TEXT), backend, cfg)
        assert trace.mode is ModeTag.DEEP
        assert trace.final_answer == "7"
        assert trace.emitted_tokens == 20
        # two non-winning samples of the same deterministic script
        assert trace.aux_tokens == 40
        assert trace.probe_tokens == 3 * 2 * 2  # three runs, two probes, two calls each
        assert trace.rng_seed == derive_seed(0, "deep-q", "sc", 0)
        assert trace.total_tokens == 20 + 40 + 12
