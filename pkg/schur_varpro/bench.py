"""
Multi-method, multi-seed benchmark.

Every (dataset, method, seed) is solved from the same random start per seed.
The reference minimum of a dataset is the best final cost over all of its runs
(cross-method consensus); a run converged when it did not time out and its
final cost is within `convergence_pct` percent of that minimum. The summary
reports medians over converged runs and the improvement factors
baseline / ours. Cells of a method without converged runs hold the sentinel.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from logging import getLogger
from pathlib import Path
from typing import TextIO

import attrs
import cattrs
import numpy as np
import parse
from cattrs.errors import BaseValidationError

from .dataset import Dataset
from .enums import Method, Termination
from .errors import SchurVarproError
from .generators import NoiseModel, convert_to_snl, generate_bipartite_sfm, generate_grid_pgo
from .reader import load
from .solver import ProblemContext, SolverConfig, initial_point, solve

logger = getLogger(__name__)

SENTINEL = "-"
CONSENSUS_SLACK = 1e-8
BASELINES = (Method.ORIGINAL, Method.ORIGINAL_VARPRO)
RUN_COLUMNS = ["dataset", "method", "seed", "termination", "final_cost", "iterations", "elapsed_s", "converged", "error"]
SUMMARY_COLUMNS = ["dataset", "method", "runs", "converged", "median_time_s", "median_iters", "time_factor", "iter_factor"]

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off", "")


def _text_bool(value, _) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ValueError(f"not a boolean: {value!r}")


# string-valued dicts (CSV rows, generator specs) into typed records
converter = cattrs.Converter()
converter.register_structure_hook(bool, _text_bool)


# =============================================================================
# Dataset sources
# =============================================================================


@attrs.frozen
class GridSpec:
    rows: int
    cols: int
    d: int = 2
    layers: int = 1
    rot_sigma: float = 0.0
    trans_sigma: float = 0.0
    loop_prob: float = 0.1
    seed: int = 0
    snl: bool = False

    def build(self) -> Dataset:
        dataset = generate_grid_pgo(
            self.rows, self.cols, self.d, NoiseModel(self.rot_sigma, self.trans_sigma), self.loop_prob, self.seed, self.layers
        )
        return convert_to_snl(dataset) if self.snl else dataset


@attrs.frozen
class SfmSpec:
    frames: int
    points: int
    obs: int = 3
    d: int = 3
    rot_sigma: float = 0.0
    trans_sigma: float = 0.0
    seed: int = 0
    snl: bool = False

    def build(self) -> Dataset:
        dataset = generate_bipartite_sfm(self.frames, self.points, self.obs, NoiseModel(self.rot_sigma, self.trans_sigma), self.seed, self.d)
        return convert_to_snl(dataset) if self.snl else dataset


GENERATORS: dict[str, type[GridSpec] | type[SfmSpec]] = {"grid": GridSpec, "sfm": SfmSpec}
DatasetSource = str | Path | GridSpec | SfmSpec


def parse_generator_spec(text: str) -> GridSpec | SfmSpec:
    """Parse `kind key=value ...`, e.g. `grid rows=10 cols=10 trans_sigma=0.1 snl=true`."""
    if not text.split():
        raise ValueError("empty generator spec")
    kind, *pairs = text.split()
    if kind not in GENERATORS:
        raise ValueError(f"unknown generator {kind!r} (expected one of {', '.join(GENERATORS)})")
    fields = {}
    for pair in pairs:
        result = parse.parse("{key}={value}", pair)
        if result is None:
            raise ValueError(f"expected key=value, got {pair!r}")
        fields[result["key"]] = result["value"]
    unknown = sorted(set(fields) - set(attrs.fields_dict(GENERATORS[kind])))
    if unknown:
        raise ValueError(f"{kind}: unknown parameter(s) {', '.join(unknown)}")
    try:
        return converter.structure(fields, GENERATORS[kind])
    except BaseValidationError as e:
        raise ValueError(f"{kind}: invalid parameters in {text!r}: {e}") from e


def load_source(source: DatasetSource) -> Dataset:
    if isinstance(source, (GridSpec, SfmSpec)):
        return source.build()
    return load(source)


# =============================================================================
# Specification and per-run results
# =============================================================================


def _non_empty(instance, attribute, value) -> None:
    if not value:
        raise ValueError(f"{attribute.name} must not be empty")


def _methods(values) -> tuple[Method, ...]:
    return tuple(Method(m) for m in values)


@attrs.frozen
class BenchSpec:
    datasets: tuple[DatasetSource, ...] = attrs.field(converter=tuple, validator=_non_empty)
    methods: tuple[Method, ...] = attrs.field(default=tuple(Method), converter=_methods, validator=_non_empty)
    seeds: int = attrs.field(default=5, validator=attrs.validators.ge(1))
    time_limit_s: float = attrs.field(default=600.0, validator=attrs.validators.gt(0))
    convergence_pct: float = attrs.field(default=1.0, validator=attrs.validators.ge(0))
    parallel: bool = False
    config: SolverConfig = attrs.field(factory=SolverConfig)

    def solver_config(self) -> SolverConfig:
        return attrs.evolve(self.config, max_time=self.time_limit_s)


@attrs.frozen
class BenchRun:
    dataset: str
    method: Method
    seed: int
    termination: str  # a Termination value, or "error"
    final_cost: float = math.nan
    iterations: int = 0
    elapsed_s: float = math.nan
    converged: bool = False
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error) or not math.isfinite(self.final_cost)


@attrs.frozen
class SummaryRow:
    dataset: str
    method: Method
    runs: int
    converged: int
    median_time_s: float | None
    median_iters: float | None
    time_factor: float | None  # baseline / ours, only on baseline rows
    iter_factor: float | None


# =============================================================================
# Running
# =============================================================================


def _error_runs(name: str, methods, seeds: int, message: str) -> list[BenchRun]:
    return [BenchRun(name, m, s, "error", error=message) for m in methods for s in range(seeds)]


def _run_one(name: str, context: ProblemContext, method: Method, seed: int, config: SolverConfig) -> BenchRun:
    try:
        report = solve(method, context, initial_point(context.layout, method, seed), config)
    except (SchurVarproError, ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        logger.warning(f"{name} {method.value} seed {seed}: {e}")
        return BenchRun(name, method, seed, "error", error=str(e))
    return BenchRun(name, method, seed, report.termination.value, report.final_cost, report.iterations, report.elapsed_seconds)


def _dataset_runs(source: DatasetSource, spec: BenchSpec, executor: ThreadPoolExecutor | None) -> list[BenchRun]:
    config = spec.solver_config()
    try:
        dataset = load_source(source)
    except (SchurVarproError, ValueError, OSError) as e:
        name = str(source) if isinstance(source, (str, Path)) else type(source).__name__
        logger.warning(f"{name}: could not load dataset: {e}")
        return _error_runs(name, spec.methods, spec.seeds, str(e))

    name = dataset.name
    model = dataset.model()
    needs_operator = any(m is not Method.ORIGINAL for m in spec.methods)
    runs: list[BenchRun] = []
    methods = list(spec.methods)
    try:
        context = ProblemContext.build(model, config, need_operator=needs_operator)
    except SchurVarproError as e:
        if not needs_operator or Method.ORIGINAL not in methods:
            logger.warning(f"{name}: {e}")
            return _error_runs(name, methods, spec.seeds, str(e))
        # the full-problem baseline does not need the Schur operator
        logger.warning(f"{name}: {e}; running {Method.ORIGINAL.value} only")
        runs += _error_runs(name, [m for m in methods if m is not Method.ORIGINAL], spec.seeds, str(e))
        methods = [Method.ORIGINAL]
        context = ProblemContext.build(model, config, need_operator=False)

    tasks = [(m, s) for m in methods for s in range(spec.seeds)]
    if executor is None:
        runs += [_run_one(name, context, m, s, config) for m, s in tasks]
    else:
        runs += list(executor.map(lambda task: _run_one(name, context, task[0], task[1], config), tasks))
    logger.info(f"{name}: {len(tasks)} runs done")
    return runs


def run_bench(spec: BenchSpec) -> list[BenchRun]:
    """Run every (dataset, method, seed) and mark convergence against the per-dataset best."""
    runs: list[BenchRun] = []
    if spec.parallel:
        with ThreadPoolExecutor(max_workers=os.cpu_count()) as executor:
            for source in spec.datasets:
                runs += _dataset_runs(source, spec, executor)
    else:
        for source in spec.datasets:
            runs += _dataset_runs(source, spec, None)
    return mark_converged(runs, spec.convergence_pct)


# =============================================================================
# Aggregation
# =============================================================================


def best_costs(runs: list[BenchRun]) -> dict[str, float]:
    best: dict[str, float] = {}
    for run in runs:
        if not run.failed:
            best[run.dataset] = min(best.get(run.dataset, math.inf), run.final_cost)
    return best


def mark_converged(runs: list[BenchRun], convergence_pct: float = 1.0) -> list[BenchRun]:
    best = best_costs(runs)
    marked = []
    for run in runs:
        converged = (
            not run.failed
            and run.termination != Termination.TIMEOUT.value
            and run.final_cost <= (1.0 + convergence_pct / 100.0) * best[run.dataset] + CONSENSUS_SLACK
        )
        marked.append(attrs.evolve(run, converged=converged))
    return marked


def _median(values: list[float]) -> float | None:
    return float(np.median(values)) if values else None


def _factor(baseline: float | None, ours: float | None) -> float | None:
    if baseline is None or ours is None or ours <= 0:
        return None
    return baseline / ours


def summarize(runs: list[BenchRun], convergence_pct: float = 1.0) -> list[SummaryRow]:
    """Median runtime and iterations per (dataset, method); convergence is recomputed from the costs."""
    runs = mark_converged(runs, convergence_pct)
    datasets = list(dict.fromkeys(r.dataset for r in runs))
    methods = [m for m in Method if any(r.method is m for r in runs)]
    rows: list[SummaryRow] = []
    for name in datasets:
        medians: dict[Method, tuple[float | None, float | None, int, int]] = {}
        for method in methods:
            mine = [r for r in runs if r.dataset == name and r.method is method]
            if not mine:
                continue
            ok = [r for r in mine if r.converged]
            medians[method] = (_median([r.elapsed_s for r in ok]), _median([float(r.iterations) for r in ok]), len(mine), len(ok))
        ours_time, ours_iters = medians.get(Method.OURS, (None, None, 0, 0))[:2]
        for method, (time_s, iters, n_runs, n_ok) in medians.items():
            time_factor = iter_factor = None
            if method in BASELINES:
                time_factor = _factor(time_s, ours_time)
                iter_factor = _factor(iters, ours_iters)
            rows.append(SummaryRow(name, method, n_runs, n_ok, time_s, iters, time_factor, iter_factor))
    return rows


# =============================================================================
# CSV
# =============================================================================


def _cell(value) -> str:
    match value:
        case None:
            return SENTINEL
        case bool():
            return "1" if value else "0"
        case float():
            return repr(value)
        case Method():
            return value.value
        case _:
            return str(value)


def write_runs_csv(runs: list[BenchRun], f: TextIO) -> None:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(RUN_COLUMNS)
    for run in runs:
        writer.writerow([_cell(getattr(run, column)) for column in RUN_COLUMNS])


def read_runs_csv(f: TextIO) -> list[BenchRun]:
    reader = csv.DictReader(f)
    if reader.fieldnames != RUN_COLUMNS:
        raise ValueError(f"unexpected run columns {reader.fieldnames}")
    return [converter.structure(row, BenchRun) for row in reader]


def write_summary_csv(rows: list[SummaryRow], f: TextIO) -> None:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        writer.writerow([_cell(getattr(row, column)) for column in SUMMARY_COLUMNS])


def format_summary(rows: list[SummaryRow], convergence_pct: float = 1.0) -> str:
    """Plain-text table for the terminal."""
    header = f"{'dataset':<28} {'method':<16} {'conv':>6} {'time [s]':>10} {'iters':>7} {'x time':>7} {'x iters':>7}"
    lines = [
        f"reference minimum: best final cost over all runs of a dataset; converged = within {convergence_pct:g}% of it",
        header,
        "-" * len(header),
    ]

    def num(value: float | None, spec: str) -> str:
        return SENTINEL if value is None else format(value, spec)

    for row in rows:
        lines.append(
            f"{row.dataset:<28} {row.method.value:<16} {f'{row.converged}/{row.runs}':>6} {num(row.median_time_s, '.3f'):>10} "
            f"{num(row.median_iters, 'g'):>7} {num(row.time_factor, '.2f'):>7} {num(row.iter_factor, '.2f'):>7}"
        )
    return "\n".join(lines)
