"""Synthetic families and the empirical overhead-bound check."""

from __future__ import annotations

import math

import pytest

from arsbench.backends import ScriptedBackend
from arsbench.bound_lab import (
    BoundReport,
    InstanceOutcome,
    SyntheticFamilySpec,
    empirical_bound_check,
    low_certainty_instances,
    query_for_script,
    reflection_required_instances,
    run_bound_lab,
    synth_instances,
)
from arsbench.engine import SuppressionConfig, generate_with_ars
from arsbench.errors import ConfigurationError
from arsbench.harness import BaselineConfig, BaselineKind, run_baseline


class TestSyntheticFamilySpec:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            SyntheticFamilySpec(optimal_range=(3, 50))
        with pytest.raises(ConfigurationError):
            SyntheticFamilySpec(optimal_range=(60, 50))
        with pytest.raises(ConfigurationError):
            SyntheticFamilySpec(n_instances=0)
        with pytest.raises(ConfigurationError):
            SyntheticFamilySpec(loop_length=0)
        with pytest.raises(ConfigurationError):
            SyntheticFamilySpec(r_max=0)
        with pytest.raises(ConfigurationError):
            SyntheticFamilySpec(emit_prob=0.0)
        with pytest.raises(ConfigurationError):
            SyntheticFamilySpec(loop_gap=0)
        with pytest.raises(ConfigurationError):
            SyntheticFamilySpec(loops_per_instance=5, r_max=4)


SMALL_FAMILY = SyntheticFamilySpec(
    n_instances=12, optimal_range=(50, 90), loop_length=10,
    loops_per_instance=2, seed=0)


class TestSynthInstances:
    def test_deterministic(self):
        assert synth_instances(SMALL_FAMILY) == synth_instances(SMALL_FAMILY)

    def test_shape(self):
        interval = 8
        specs = synth_instances(SMALL_FAMILY, checkpoint_interval=interval)
        assert len(specs) == 12
        gap = interval + 1
        for spec in specs:
            optimal = spec.answer_known_at
            assert 50 <= optimal <= 90
            assert len(spec.solution_tokens) == optimal + gap + 2
            assert [loop.position for loop in spec.loops] == [
                optimal + gap, optimal + gap + 1]
            assert all(loop.max_fires is None for loop in spec.loops)
            assert all(len(loop.body_tokens) == 10 for loop in spec.loops)
            assert " \\boxed{" in spec.solution_tokens
            assert spec.gold_answer in spec.solution_tokens

    def test_gold_answers_are_distinct(self):
        specs = synth_instances(SMALL_FAMILY)
        golds = {spec.gold_answer for spec in specs}
        assert len(golds) == len(specs)

    def test_first_loop_sits_beyond_a_hot_checkpoint(self):
        # once the answer is known, a checkpoint fires before any loop;
        # that ordering is what makes the family's overhead collapse
        for interval in (8, 64):
            for spec in synth_instances(SMALL_FAMILY, checkpoint_interval=interval):
                optimal = spec.answer_known_at
                first_hot = interval * math.ceil(optimal / interval)
                assert first_hot < spec.loops[0].position

    def test_explicit_loop_gap(self):
        family = SyntheticFamilySpec(
            n_instances=2, optimal_range=(50, 60), loop_length=5,
            loops_per_instance=1, loop_gap=3)
        for spec in synth_instances(family, checkpoint_interval=64):
            assert spec.loops[0].position == spec.answer_known_at + 3

    def test_bad_interval_rejected(self):
        with pytest.raises(ConfigurationError):
            synth_instances(SMALL_FAMILY, checkpoint_interval=0)


class TestReflectionRequiredInstances:
    def test_shape(self):
        specs = reflection_required_instances(8, seed=1, checkpoint_interval=64)
        assert len(specs) == 8
        for spec in specs:
            (loop,) = spec.loops
            assert loop.emit_prob == 1.0
            assert loop.max_fires == 1
            assert loop.position == spec.answer_known_at
            assert loop.position % 64 != 0
            # the straight-line script commits to a wrong boxed value
            assert "0" in spec.solution_tokens
            assert spec.gold_answer in loop.body_tokens
            assert spec.gold_answer not in spec.solution_tokens

    def test_adaptive_run_keeps_the_correction(self):
        cfg = SuppressionConfig(checkpoint_interval=64, max_tokens=1200)
        for spec in reflection_required_instances(3, seed=2):
            trace = generate_with_ars(query_for_script(spec), ScriptedBackend(spec), cfg)
            assert trace.final_answer == spec.gold_answer


class TestLowCertaintyInstances:
    def test_shape(self):
        specs = low_certainty_instances(5, seed=3)
        for spec in specs:
            assert spec.answer_known_at == len(spec.solution_tokens)
            assert len(spec.loops) == 2
            assert all(loop.emit_prob == 0.7 for loop in spec.loops)

    def test_gated_run_is_token_identical_to_vanilla(self):
        cfg = SuppressionConfig(checkpoint_interval=64, max_tokens=1200)
        for spec in low_certainty_instances(3, seed=4):
            query = query_for_script(spec)
            ars = generate_with_ars(query, ScriptedBackend(spec), cfg)
            vanilla = run_baseline(query, ScriptedBackend(spec),
                                   BaselineConfig(BaselineKind.VANILLA), cfg)
            assert ars.text == vanilla.text
            assert ars.emitted_tokens == vanilla.emitted_tokens
            assert ars.suppression_events == ()


class TestEmpiricalBoundCheck:
    def test_slack_term_formula(self):
        report = empirical_bound_check(
            [InstanceOutcome("a", 100, 100, 100)], slack_coefficient=10.0, r_max=64)
        assert report.slack_term == pytest.approx(10.0 * math.sqrt(math.log(64)), abs=1e-12)
        assert report.slack_term == pytest.approx(20.3939, abs=1e-3)

    def test_single_round_has_no_slack(self):
        report = empirical_bound_check(
            [InstanceOutcome("a", 100, 100, 100)], slack_coefficient=10.0, r_max=1)
        assert report.slack_term == 0.0

    def test_fitted_ratio_without_slack(self):
        outcomes = [InstanceOutcome(f"i{k}", 100 * k, 110 * k, 200 * k)
                    for k in range(1, 5)]
        report = empirical_bound_check(outcomes, slack_coefficient=0.0, r_max=64)
        assert report.fitted_overhead_ratio == pytest.approx(0.1, abs=1e-12)
        assert report.fraction_within_bound == 1.0

    def test_fitted_ratio_is_scale_invariant(self):
        base = [InstanceOutcome(f"i{k}", 50 + k, 60 + k, 100) for k in range(6)]
        scaled = [InstanceOutcome(o.instance_id, o.optimal_tokens * 7,
                                  o.ars_tokens * 7, o.vanilla_tokens * 7)
                  for o in base]
        a = empirical_bound_check(base, slack_coefficient=0.0, r_max=64)
        b = empirical_bound_check(scaled, slack_coefficient=0.0, r_max=64)
        assert a.fitted_overhead_ratio == pytest.approx(b.fitted_overhead_ratio, abs=1e-12)

    def test_ratio_floored_at_zero(self):
        outcomes = [InstanceOutcome("a", 100, 80, 100)]
        report = empirical_bound_check(outcomes, slack_coefficient=0.0, r_max=64)
        assert report.fitted_overhead_ratio == 0.0

    def test_outliers_fall_outside_the_fitted_bound(self):
        outcomes = [InstanceOutcome("ok", 100, 100, 100),
                    InstanceOutcome("bad", 100, 200, 200)]
        report = empirical_bound_check(outcomes, slack_coefficient=0.0,
                                       allowed_miss_fraction=0.1, r_max=64)
        assert report.fitted_overhead_ratio == pytest.approx(0.5, abs=1e-12)
        assert report.fraction_within_bound == 0.5
        assert not report.meets_target
        relaxed = empirical_bound_check(outcomes, slack_coefficient=0.0,
                                        allowed_miss_fraction=0.5, r_max=64)
        assert relaxed.meets_target

    def test_validation(self):
        good = [InstanceOutcome("a", 100, 100, 100)]
        with pytest.raises(ConfigurationError):
            empirical_bound_check([])
        with pytest.raises(ConfigurationError):
            empirical_bound_check(good, slack_coefficient=-1.0)
        with pytest.raises(ConfigurationError):
            empirical_bound_check(good, allowed_miss_fraction=1.0)
        with pytest.raises(ConfigurationError):
            empirical_bound_check(good, r_max=0)
        with pytest.raises(ConfigurationError):
            empirical_bound_check([InstanceOutcome("a", 0, 10, 10)])


class TestRunBoundLab:
    def test_small_family_meets_the_bound(self):
        report = run_bound_lab(SMALL_FAMILY, checkpoint_interval=8)
        assert isinstance(report, BoundReport)
        assert report.fitted_overhead_ratio <= 0.25
        assert report.fraction_within_bound >= 0.9
        assert report.meets_target
        assert all(o.vanilla_tokens > o.ars_tokens for o in report.per_instance)

    def test_tighter_checkpoints_do_not_hurt(self):
        coarse = run_bound_lab(SMALL_FAMILY, checkpoint_interval=8)
        fine = run_bound_lab(SMALL_FAMILY, checkpoint_interval=4)
        assert fine.fitted_overhead_ratio <= coarse.fitted_overhead_ratio + 0.02

    def test_infeasible_family_is_rejected_up_front(self):
        family = SyntheticFamilySpec(n_instances=1, optimal_range=(50, 2000))
        with pytest.raises(ConfigurationError, match="cap"):
            run_bound_lab(family, max_tokens=1200)


class TestLoopCountStress:
    """Seeded regression: more reflection loops hurt vanilla, barely touch ARS."""

    @staticmethod
    def _mean_lengths(loops: int) -> tuple[float, float]:
        family = SyntheticFamilySpec(loops_per_instance=loops)
        cfg = SuppressionConfig(checkpoint_interval=64, max_tokens=1200)
        specs = synth_instances(family, checkpoint_interval=cfg.checkpoint_interval)
        ars_total = vanilla_total = 0
        for spec in specs:
            query = query_for_script(spec)
            ars = generate_with_ars(query, ScriptedBackend(spec), cfg)
            vanilla = run_baseline(query, ScriptedBackend(spec),
                                   BaselineConfig(BaselineKind.VANILLA), cfg)
            ars_total += ars.emitted_tokens
            vanilla_total += vanilla.emitted_tokens
        return ars_total / len(specs), vanilla_total / len(specs)

    def test_ars_length_grows_sublinearly_in_loop_count(self):
        means = {loops: self._mean_lengths(loops) for loops in (1, 3, 6)}
        vanilla = [means[loops][1] for loops in (1, 3, 6)]
        assert vanilla == sorted(vanilla)
        ars_growth = means[6][0] - means[1][0]
        vanilla_growth = means[6][1] - means[1][1]
        assert vanilla_growth > 100  # each extra loop costs the baseline dearly
        assert ars_growth <= vanilla_growth / 3
