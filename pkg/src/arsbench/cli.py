"""Command-line entry points.

Subcommands:
  run              benchmark methods over a dataset or script suite
  theorem-lab      synthetic overhead-bound experiments
  validate-config  parse a config file and echo the normalized form
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .backends import HttpCompletionsBackend, ScriptedBackend, load_scripts
from .bound_lab import (
    SyntheticFamilySpec,
    query_for_script,
    run_bound_lab,
    synth_instances,
)
from .config import AppConfig
from .difficulty import DatasetKind
from .errors import BackendError, ConfigurationError, DatasetError
from .harness import emit_report, load_dataset, run_benchmark

_DATASET_KINDS = {
    "plain": DatasetKind.PLAIN,
    "gsm8k": DatasetKind.GSM8K_STYLE,
    "math": DatasetKind.MATH_STYLE,
}


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arsbench",
        description="Certainty-gated suppression of redundant reasoning, benchmarked.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="benchmark one or more decoding methods")
    run.add_argument("--dataset", help="JSONL problem file (http backend)")
    run.add_argument("--scripts", help="JSONL script file (scripted backend)")
    run.add_argument("--backend", choices=["scripted", "http"], default="scripted")
    run.add_argument("--methods", default="ars,vanilla,static,budget",
                     help="comma-separated subset of ars,vanilla,static,budget")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--max-tokens", type=_positive_int, default=None)
    run.add_argument("--n", type=_positive_int, default=200,
                     help="problem count cap (and default suite size)")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--out", default="ars_out", help="report directory")
    run.add_argument("--workers", type=_positive_int, default=1)
    run.add_argument("--base-url", default=None, help="http backend endpoint")
    run.add_argument("--model", default=None, help="http backend model name")
    run.add_argument("--dataset-kind", choices=sorted(_DATASET_KINDS), default="plain")
    run.set_defaults(handler=_cmd_run)

    lab = sub.add_parser("theorem-lab", help="synthetic overhead-bound experiments")
    lab.add_argument("--n-instances", type=_positive_int, default=100)
    lab.add_argument("--optimal-min", type=_positive_int, default=50)
    lab.add_argument("--optimal-max", type=_positive_int, default=400)
    lab.add_argument("--loop-length", type=_positive_int, default=40)
    lab.add_argument("--loops", type=_positive_int, default=3)
    lab.add_argument("--r-max", type=_positive_int, default=64)
    lab.add_argument("--seed", type=int, default=0)
    lab.add_argument("--emit-prob", type=float, default=0.7)
    lab.add_argument("--c-slack", type=float, default=10.0)
    lab.add_argument("--delta", type=float, default=0.1,
                     help="allowed miss fraction")
    lab.add_argument("--checkpoint-interval", type=_positive_int, default=8)
    lab.add_argument("--intervals", default=None,
                     help="comma-separated interval sweep, overrides --checkpoint-interval")
    lab.add_argument("--max-tokens", type=_positive_int, default=1200)
    lab.add_argument("--out", default=None, help="directory for report files")
    lab.set_defaults(handler=_cmd_theorem_lab)

    check = sub.add_parser("validate-config", help="validate and echo a config file")
    check.add_argument("--config", required=True)
    check.set_defaults(handler=_cmd_validate_config)
    return parser


def _load_app_config(args) -> AppConfig:
    app = AppConfig.from_file(args.config) if args.config else AppConfig.default()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    if getattr(args, "max_tokens", None) is not None:
        overrides["max_tokens"] = args.max_tokens
    if getattr(args, "base_url", None) is not None:
        overrides["base_url"] = args.base_url
    if getattr(args, "model", None) is not None:
        overrides["model"] = args.model
    if overrides:
        app = dataclasses.replace(app, **overrides)
    return app


def _cmd_run(args) -> int:
    app = _load_app_config(args)
    cfg = app.suppression_config()
    energy = app.energy_model()
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ConfigurationError("no methods requested")
    kind = _DATASET_KINDS[args.dataset_kind]

    if args.backend == "scripted":
        if args.dataset:
            raise ConfigurationError(
                "--dataset requires --backend http; scripted runs take --scripts")
        if args.scripts:
            specs = load_scripts(args.scripts)[:args.n]
        else:
            family = SyntheticFamilySpec(n_instances=args.n,
                                         seed=app.rng_seed,
                                         per_token_latency=app.per_token_latency)
            specs = synth_instances(family, checkpoint_interval=cfg.checkpoint_interval)
        spec_by_id = {spec.instance_id: spec for spec in specs}
        queries = [query_for_script(spec) for spec in specs]

        def factory(query):
            return ScriptedBackend(spec_by_id[query.id], top_k=app.top_k,
                                   probe_marker=cfg.probe.probe_prompt)

        backend_name = "scripted"
        dataset_name = Path(args.scripts).stem if args.scripts else "synthetic"
    else:
        if args.scripts:
            raise ConfigurationError(
                "--scripts requires --backend scripted; http runs take --dataset")
        if not args.dataset:
            raise ConfigurationError("http runs need --dataset")
        if not app.base_url or not app.model:
            raise ConfigurationError("http runs need --base-url and --model")
        queries = load_dataset(args.dataset, dataset_kind=kind, limit=args.n)
        backend = HttpCompletionsBackend(app.base_url, app.model, top_k=app.top_k,
                                         api_key_env=app.api_key_env)

        def factory(query):
            return backend

        backend_name = "http"
        dataset_name = Path(args.dataset).stem

    metrics, traces = run_benchmark(
        queries, factory, methods,
        cfg=cfg, energy=energy,
        dataset_name=dataset_name, backend_name=backend_name,
        static_p=app.static_p, budget_tokens=app.budget_tokens,
        workers=args.workers)
    paths = emit_report(metrics, args.out, traces=traces, energy=energy)
    sys.stdout.write(paths["txt"].read_text(encoding="utf-8"))
    print(f"\nreports written to {Path(args.out).resolve()}")
    return 0


def _cmd_theorem_lab(args) -> int:
    if args.optimal_max < args.optimal_min:
        raise ConfigurationError("--optimal-max must be >= --optimal-min")
    if args.intervals:
        try:
            intervals = [int(part) for part in args.intervals.split(",") if part.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"bad --intervals value: {exc}") from exc
        if not intervals or any(v < 1 for v in intervals):
            raise ConfigurationError("--intervals needs positive integers")
    else:
        intervals = [args.checkpoint_interval]
    family = SyntheticFamilySpec(
        n_instances=args.n_instances,
        optimal_range=(args.optimal_min, args.optimal_max),
        loop_length=args.loop_length,
        loops_per_instance=args.loops,
        r_max=args.r_max,
        seed=args.seed,
        emit_prob=args.emit_prob,
    )
    reports = []
    for interval in intervals:
        report = run_bound_lab(
            family,
            checkpoint_interval=interval,
            slack_coefficient=args.c_slack,
            allowed_miss_fraction=args.delta,
            max_tokens=args.max_tokens,
        )
        reports.append((interval, report))
        print(f"interval={interval}: fitted_overhead_ratio="
              f"{report.fitted_overhead_ratio:.4f} slack={report.slack_term:.2f} "
              f"within_bound={report.fraction_within_bound:.3f} "
              f"target={'met' if report.meets_target else 'MISSED'}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "reports": [
                {
                    "checkpoint_interval": interval,
                    "fitted_overhead_ratio": report.fitted_overhead_ratio,
                    "slack_term": report.slack_term,
                    "fraction_within_bound": report.fraction_within_bound,
                    "allowed_miss_fraction": report.allowed_miss_fraction,
                    "meets_target": report.meets_target,
                    "slack_coefficient": report.slack_coefficient,
                    "r_max": report.r_max,
                }
                for interval, report in reports
            ]
        }
        (out_dir / "bound_report.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with (out_dir / "instances.csv").open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["interval", "instance_id", "optimal_tokens",
                             "ars_tokens", "vanilla_tokens"])
            for interval, report in reports:
                for out in report.per_instance:
                    writer.writerow([interval, out.instance_id, out.optimal_tokens,
                                     out.ars_tokens, out.vanilla_tokens])
        print(f"reports written to {out_dir.resolve()}")
    return 0 if all(report.meets_target for _, report in reports) else 1


def _cmd_validate_config(args) -> int:
    app = AppConfig.from_file(args.config)
    print(json.dumps(app.to_dict(), indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigurationError, DatasetError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


cli_main = main


if __name__ == "__main__":
    sys.exit(main())
