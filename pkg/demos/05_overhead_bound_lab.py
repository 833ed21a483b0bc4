"""
Measuring how close suppressed decoding runs to the optimal length
===================================================================

Every synthetic instance knows its own optimal reasoning length T*.  The
lab runs the adaptive controller over a family, fits the smallest overhead
ratio eps such that t_ars <= (1 + eps) * T* + slack, and repeats with the
checkpoint interval halved: denser checkpoints should not loosen the fit.
"""

from arsbench.bound_lab import SyntheticFamilySpec, run_bound_lab

family = SyntheticFamilySpec(n_instances=24, seed=11)

for interval in (16, 8, 4):
    report = run_bound_lab(family, checkpoint_interval=interval,
                           slack_coefficient=10.0, allowed_miss_fraction=0.1)
    status = "met" if report.meets_target else "MISSED"
    print(f"checkpoint_interval={interval:>2}: "
          f"fitted overhead ratio = {report.fitted_overhead_ratio:.4f}, "
          f"slack = {report.slack_term:.1f} tokens, "
          f"{report.fraction_within_bound:.0%} within bound ({status})")

print()
report = run_bound_lab(family, checkpoint_interval=8)
worst = max(report.per_instance, key=lambda o: o.ars_tokens / o.optimal_tokens)
print("worst instance at interval 8:")
print(f"  {worst.instance_id}: optimal {worst.optimal_tokens},"
      f" ars {worst.ars_tokens}, vanilla {worst.vanilla_tokens}")
