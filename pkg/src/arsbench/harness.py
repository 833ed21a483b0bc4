"""Benchmark harness: datasets, baselines, metrics, and report files.

Baselines share the adaptive controller's decode loop and seeding so that
every method sees the same sampled token stream wherever their decisions
coincide; they differ only in the gate and the prompt preamble.
"""

from __future__ import annotations

import csv
import json
import math
import random
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .answers import extract_final_answer, normalize_answer, score_answer
from .backends import GeneratorBackend
from .difficulty import SOLUTION_MARKER, SYSTEM_PREAMBLE, DatasetKind, Query
from .engine import (
    GenerationTrace,
    StaticGate,
    SuppressionConfig,
    _decode_loop,
    _latency_for,
    derive_seed,
    generate_with_ars,
)
from .errors import ConfigurationError, DatasetError


class EnergyMode(str, Enum):
    POWER_TIMES_LATENCY = "power_times_latency"
    JOULES_PER_TOKEN = "joules_per_token"


@dataclass(frozen=True)
class EnergyModel:
    """Converts a run into joules, either via wall time or per-token cost."""

    mode: EnergyMode = EnergyMode.POWER_TIMES_LATENCY
    device_power_watts: float = 250.0
    joules_per_token: float = 0.25

    def __post_init__(self) -> None:
        if self.device_power_watts <= 0.0:
            raise ConfigurationError("device power must be positive")
        if self.joules_per_token <= 0.0:
            raise ConfigurationError("joules per token must be positive")

    def joules(self, trace: GenerationTrace) -> float:
        if self.mode is EnergyMode.POWER_TIMES_LATENCY:
            return self.device_power_watts * trace.wall_latency
        return self.joules_per_token * trace.total_tokens


@dataclass(frozen=True)
class RunMetrics:
    method: str
    dataset: str
    backend: str
    n_problems: int
    n_correct: int
    accuracy: float
    mean_latency: float
    total_tokens: int
    tpc: float
    jpc: float


class BaselineKind(str, Enum):
    VANILLA = "vanilla"
    STATIC_SUPPRESS = "static"
    BUDGET_PROMPT = "budget"


@dataclass(frozen=True)
class BaselineConfig:
    kind: BaselineKind
    static_p: float = 0.9
    budget: int = 64

    def __post_init__(self) -> None:
        if not (0.0 <= self.static_p <= 1.0):
            raise ConfigurationError("static suppression probability outside [0, 1]")
        if self.budget < 1:
            raise ConfigurationError("budget must be positive")


def load_dataset(path: str | Path, file_format: str = "jsonl", *,
                 dataset_kind: DatasetKind = DatasetKind.PLAIN,
                 limit: int | None = None) -> list[Query]:
    """Read problems from a line-delimited JSON file.

    Each record needs a "question"; "id" defaults to the line number and
    "answer" may embed its gold value after a #### marker. Duplicate ids
    are rejected because seeds and traces key on them.
    """
    if file_format != "jsonl":
        raise DatasetError(f"unsupported dataset format {file_format!r}")
    path = Path(path)
    queries: list[Query] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict) or "question" not in record:
                raise DatasetError(f"{path}:{lineno}: record is missing a question")
            qid = str(record.get("id", lineno))
            if qid in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate id {qid!r}")
            seen.add(qid)
            gold = record.get("answer")
            if gold is not None:
                gold = str(gold)
                if "####" in gold:
                    gold = gold.rsplit("####", 1)[1]
                gold = normalize_answer(gold)
            queries.append(Query(id=qid, text=str(record["question"]),
                                 gold_answer=gold, dataset_kind=dataset_kind))
            if limit is not None and len(queries) >= limit:
                break
    if not queries:
        raise DatasetError(f"{path}: no records found")
    return queries


def baseline_prompt(kind: BaselineKind, query: Query, budget_tokens: int = 64) -> str:
    if kind is BaselineKind.BUDGET_PROMPT:
        instruction = (f"Think step by step, keeping the reasoning within "
                       f"{budget_tokens} tokens.")
    else:
        instruction = "Think through the problem step by step."
    return (f"{SYSTEM_PREAMBLE} {instruction}\n\n"
            f"Problem: {query.text}\n\n{SOLUTION_MARKER}")


def run_baseline(query: Query, backend: GeneratorBackend, baseline: BaselineConfig,
                 cfg: SuppressionConfig | None = None) -> GenerationTrace:
    """Decode one problem under a baseline policy.

    Vanilla and budget-prompt run ungated; static suppression applies a
    constant probability to every trigger. All of them reuse the main
    decode loop and per-query seed derivation.
    """
    if cfg is None:
        cfg = SuppressionConfig()
    if not query.text.strip():
        raise ConfigurationError("query text must be non-empty")
    prompt = baseline_prompt(baseline.kind, query, baseline.budget)
    gate = (StaticGate(baseline.static_p)
            if baseline.kind is BaselineKind.STATIC_SUPPRESS else None)
    rng = random.Random(derive_seed(cfg.rng_seed, query.id))
    started = time.perf_counter()
    outcome = _decode_loop(
        prompt, backend, max_tokens=cfg.max_tokens, triggers=cfg.trigger_set,
        rng=rng, gate=gate, checkpoint_interval=cfg.checkpoint_interval)
    wall = time.perf_counter() - started
    return GenerationTrace(
        query_id=query.id,
        mode=None,
        difficulty=None,
        text=outcome.text,
        emitted_tokens=outcome.emitted,
        probe_tokens=0,
        aux_tokens=0,
        checkpoints=(),
        suppression_events=tuple(outcome.events),
        final_answer=extract_final_answer(outcome.text, query.dataset_kind),
        stop_reason=outcome.stop,
        wall_latency=_latency_for(backend, outcome.emitted, wall),
        rng_seed=derive_seed(cfg.rng_seed, query.id),
        warnings=(),
        error=outcome.error,
    )


def aggregate_metrics(traces: Sequence[GenerationTrace], queries: Sequence[Query],
                      energy: EnergyModel, *, method: str, dataset: str,
                      backend: str) -> RunMetrics:
    """Fold per-problem traces into one metrics row.

    Tokens and joules per correct answer are infinite when nothing was
    solved; that keeps a broken method from looking cheap.
    """
    if len(traces) != len(queries):
        raise ConfigurationError("one trace per query required")
    if not traces:
        raise ConfigurationError("cannot aggregate an empty run")
    gold_by_id = {q.id: q for q in queries}
    n_correct = 0
    total_tokens = 0
    total_joules = 0.0
    total_latency = 0.0
    for trace in traces:
        query = gold_by_id.get(trace.query_id)
        if query is None:
            raise ConfigurationError(f"trace for unknown query {trace.query_id!r}")
        if query.gold_answer is not None and score_answer(
                trace.final_answer, query.gold_answer, query.dataset_kind):
            n_correct += 1
        total_tokens += trace.total_tokens
        total_joules += energy.joules(trace)
        total_latency += trace.wall_latency
    n = len(traces)
    tpc = total_tokens / n_correct if n_correct else math.inf
    jpc = total_joules / n_correct if n_correct else math.inf
    return RunMetrics(
        method=method,
        dataset=dataset,
        backend=backend,
        n_problems=n,
        n_correct=n_correct,
        accuracy=100.0 * n_correct / n,
        mean_latency=total_latency / n,
        total_tokens=total_tokens,
        tpc=tpc,
        jpc=jpc,
    )


def trace_to_dict(trace: GenerationTrace) -> dict:
    return {
        "query_id": trace.query_id,
        "mode": trace.mode.value if trace.mode is not None else None,
        "difficulty": trace.difficulty,
        "text": trace.text,
        "emitted_tokens": trace.emitted_tokens,
        "probe_tokens": trace.probe_tokens,
        "aux_tokens": trace.aux_tokens,
        "total_tokens": trace.total_tokens,
        "checkpoints": [
            {
                "index": c.index,
                "position": c.position,
                "tentative_answer": c.tentative_answer,
                "confidence": c.confidence,
                "trend": c.trend,
                "threshold": c.threshold,
                "suppression_prob": c.suppression_prob,
                "probe_tokens_used": c.probe_tokens_used,
            }
            for c in trace.checkpoints
        ],
        "suppression_events": [
            {
                "position": e.position,
                "suppressed_token": e.suppressed_token,
                "replacement_token": e.replacement_token,
                "suppression_prob": e.suppression_prob,
                "random_draw": e.random_draw,
                "used_fallback": e.used_fallback,
            }
            for e in trace.suppression_events
        ],
        "final_answer": trace.final_answer,
        "stop_reason": trace.stop_reason.value,
        "wall_latency": trace.wall_latency,
        "rng_seed": trace.rng_seed,
        "warnings": list(trace.warnings),
        "error": trace.error,
    }


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if value == int(value):
        return str(int(value))
    return f"{value:.1f}"


CSV_COLUMNS = ("method", "dataset", "backend", "acc", "lat_s", "tpc", "jpc")


def emit_report(metrics: Sequence[RunMetrics], out_dir: str | Path, *,
                traces: dict[str, Sequence[GenerationTrace]] | None = None,
                energy: EnergyModel | None = None) -> dict[str, Path]:
    """Write report.csv, report.txt, and optionally traces.jsonl.

    The text report appends percentage reductions of the adaptive method
    against every baseline it shares the table with.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    csv_path = out_dir / "report.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in metrics:
            writer.writerow([
                row.method,
                row.dataset,
                row.backend,
                f"{row.accuracy:.1f}",
                f"{row.mean_latency:.3f}",
                _fmt(row.tpc),
                _fmt(row.jpc),
            ])
    paths["csv"] = csv_path

    txt_path = out_dir / "report.txt"
    with txt_path.open("w", encoding="utf-8") as handle:
        if energy is not None:
            handle.write(f"energy model: {energy.mode.value}\n")
        header = (f"{'method':<10} {'dataset':<16} {'backend':<9} "
                  f"{'acc%':>7} {'lat_s':>8} {'tok/corr':>10} {'J/corr':>10}\n")
        handle.write(header)
        handle.write("-" * (len(header) - 1) + "\n")
        for row in metrics:
            handle.write(
                f"{row.method:<10} {row.dataset:<16} {row.backend:<9} "
                f"{row.accuracy:>7.1f} {row.mean_latency:>8.3f} "
                f"{_fmt(row.tpc):>10} "
                f"{_fmt(row.jpc):>10}\n")
        by_method = {m.method: m for m in metrics}
        ars = by_method.get("ars")
        if ars is not None:
            handle.write("\nreductions vs ars:\n")
            for name, row in by_method.items():
                if name == "ars":
                    continue
                handle.write(
                    f"  vs {name}: tokens/correct "
                    f"{_reduction(ars.tpc, row.tpc)}, "
                    f"joules/correct "
                    f"{_reduction(ars.jpc, row.jpc)}\n")
    paths["txt"] = txt_path

    if traces is not None:
        jsonl_path = out_dir / "traces.jsonl"
        with jsonl_path.open("w", encoding="utf-8") as handle:
            for method in sorted(traces):
                for trace in traces[method]:
                    record = {"method": method, **trace_to_dict(trace)}
                    handle.write(json.dumps(record, sort_keys=True,
                                            ensure_ascii=False) + "\n")
        paths["traces"] = jsonl_path
    return paths


def _reduction(ours: float, theirs: float) -> str:
    if math.isinf(theirs) or theirs <= 0.0 or math.isinf(ours):
        return "n/a"
    return f"{(1.0 - ours / theirs) * 100.0:.1f}%"


def run_benchmark(queries: Sequence[Query], backend_factory, methods: Iterable[str], *,
                  cfg: SuppressionConfig | None = None,
                  energy: EnergyModel | None = None,
                  dataset_name: str = "dataset",
                  backend_name: str = "scripted",
                  static_p: float = 0.9,
                  budget_tokens: int = 64,
                  workers: int = 1) -> tuple[list[RunMetrics], dict[str, list[GenerationTrace]]]:
    """Run the requested methods over a query list.

    ``backend_factory(query)`` supplies the backend per problem, which is
    how scripted suites pair each query with its own script. Worker
    threads only parallelize across queries; results are reassembled in
    input order so outputs stay byte-identical for any worker count.
    """
    from concurrent.futures import ThreadPoolExecutor

    if cfg is None:
        cfg = SuppressionConfig()
    if energy is None:
        energy = EnergyModel()
    method_list = list(methods)
    known = {"ars", "vanilla", "static", "budget"}
    unknown = [m for m in method_list if m not in known]
    if unknown:
        raise ConfigurationError(f"unknown methods: {unknown}")

    def one(method: str, query: Query) -> GenerationTrace:
        backend = backend_factory(query)
        if method == "ars":
            return generate_with_ars(query, backend, cfg)
        kind = {
            "vanilla": BaselineKind.VANILLA,
            "static": BaselineKind.STATIC_SUPPRESS,
            "budget": BaselineKind.BUDGET_PROMPT,
        }[method]
        baseline = BaselineConfig(kind=kind, static_p=static_p,
                                  budget=budget_tokens)
        return run_baseline(query, backend, baseline, cfg)

    all_traces: dict[str, list[GenerationTrace]] = {}
    all_metrics: list[RunMetrics] = []
    for method in method_list:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                traces = list(pool.map(lambda q: one(method, q), queries))
        else:
            traces = [one(method, q) for q in queries]
        all_traces[method] = traces
        all_metrics.append(aggregate_metrics(
            traces, queries, energy,
            method=method, dataset=dataset_name, backend=backend_name))
    return all_metrics, all_traces
