"""
Benchmarking four decoding methods on a synthetic suite
========================================================

Builds a 16-instance synthetic family, runs the adaptive controller against
the vanilla, static-suppression, and budget-prompt baselines, and renders
the report files the ``arsbench run`` command would write.
"""

import tempfile
from pathlib import Path

from arsbench.backends import ScriptedBackend
from arsbench.bound_lab import SyntheticFamilySpec, query_for_script, synth_instances
from arsbench.engine import SuppressionConfig
from arsbench.harness import run_benchmark

cfg = SuppressionConfig(checkpoint_interval=64, max_tokens=1200)
family = SyntheticFamilySpec(n_instances=16, seed=7)
specs = synth_instances(family, checkpoint_interval=cfg.checkpoint_interval)
spec_by_id = {spec.instance_id: spec for spec in specs}
queries = [query_for_script(spec) for spec in specs]

metrics, traces = run_benchmark(
    queries,
    lambda query: ScriptedBackend(spec_by_id[query.id]),
    ["ars", "vanilla", "static", "budget"],
    cfg=cfg,
    dataset_name="demo-family",
)

with tempfile.TemporaryDirectory() as out:
    from arsbench.harness import emit_report

    paths = emit_report(metrics, out, traces=traces)
    print(Path(paths["txt"]).read_text())
    print("files written:", ", ".join(sorted(p.name for p in paths.values())))
