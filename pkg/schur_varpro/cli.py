import logging
import sys
from pathlib import Path

import attrs
import click

from .bench import BenchSpec, format_summary, parse_generator_spec, run_bench, summarize, write_runs_csv, write_summary_csv
from .enums import ExitCode, Method, RecoverMode
from .errors import AssemblyError, DimensionError, G2oParseError, NonIncidenceError, SchurVarproError
from .exporter import write_report
from .generators import NoiseModel, convert_to_snl, generate_bipartite_sfm, generate_grid_pgo
from .reader import load
from .solver import ProblemContext, SolverConfig, initial_point, solve
from .verification import DEFAULT_TRIALS, run_verification
from .writer import dumps, write_g2o

logger = logging.getLogger(__name__)

DATA_ERRORS = (AssemblyError, DimensionError, G2oParseError, NonIncidenceError)
LOG_LEVELS = [logging.WARNING, logging.INFO, logging.DEBUG]

_methods = click.Choice([m.value for m in Method])
_existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)
_output_file = click.Path(dir_okay=False, path_type=Path)


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for per-iteration detail")
def cli(verbose: int) -> None:
    logging.basicConfig(level=LOG_LEVELS[min(verbose, 2)], format="%(levelname)s %(name)s: %(message)s")


@cli.command("solve")
@click.option("--input", "input_path", type=_existing_file, required=True)
@click.option("--method", type=_methods, default=Method.OURS.value, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=_output_file, help="trace report; .json for JSON, CSV otherwise")
@click.option("--grad-tol", type=click.FloatRange(min=0, min_open=True))
@click.option("--max-iters", type=click.IntRange(min=1))
@click.option("--time-limit", type=click.FloatRange(min=0, min_open=True))
@click.option("--recover-mode", type=click.Choice([m.value for m in RecoverMode]))
def solve_command(
    input_path: Path,
    method: str,
    seed: int,
    out: Path | None,
    grad_tol: float | None,
    max_iters: int | None,
    time_limit: float | None,
    recover_mode: str | None,
) -> int:
    """Solve one g2o dataset."""
    overrides = {"grad_tol": grad_tol, "max_outer_iters": max_iters, "max_time": time_limit, "recover_mode": recover_mode}
    config = attrs.evolve(SolverConfig(seed=seed), **{k: v for k, v in overrides.items() if v is not None})
    method = Method(method)
    dataset = load(input_path)
    context = ProblemContext.build(dataset.model(), config, need_operator=method is not Method.ORIGINAL)
    report = solve(method, context, initial_point(context.layout, method, seed), config)
    if out is not None:
        write_report(report, "json" if out.suffix == ".json" else "csv", out)
    click.echo(f"final cost: {report.final_cost:.12g}")
    click.echo(f"iterations: {report.iterations}")
    click.echo(f"wall time: {report.elapsed_seconds:.3f} s")
    click.echo(f"termination: {report.termination.value}")
    return ExitCode.OK if report.converged else ExitCode.BUDGET


@cli.group("generate")
def generate() -> None:
    """Write synthetic g2o datasets."""


def _emit(dataset, out: Path | None) -> None:
    if out is None:
        click.echo(dumps(dataset), nl=False)
    else:
        write_g2o(dataset, out)
        logger.info(f"wrote {dataset.name} to {out}")


@generate.command("grid")
@click.option("--rows", type=click.IntRange(min=1), required=True)
@click.option("--cols", type=click.IntRange(min=1), required=True)
@click.option("--layers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--d", "d", type=click.Choice(["2", "3"]), default="2", show_default=True)
@click.option("--rot-sigma", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--trans-sigma", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--loop-prob", type=click.FloatRange(0, 1), default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--snl", is_flag=True, help="convert to sensor-network localization")
@click.option("--out", type=_output_file)
def generate_grid(
    rows: int, cols: int, layers: int, d: str, rot_sigma: float, trans_sigma: float, loop_prob: float, seed: int, snl: bool, out: Path | None
) -> int:
    """Grid pose graph with odometry and random loop closures."""
    try:
        dataset = generate_grid_pgo(rows, cols, int(d), NoiseModel(rot_sigma, trans_sigma), loop_prob, seed, layers)
    except ValueError as e:
        raise click.UsageError(str(e)) from e
    _emit(convert_to_snl(dataset) if snl else dataset, out)
    return ExitCode.OK


@generate.command("sfm")
@click.option("--frames", type=click.IntRange(min=1), required=True)
@click.option("--points", type=click.IntRange(min=0), required=True)
@click.option("--obs", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--d", "d", type=click.Choice(["2", "3"]), default="3", show_default=True)
@click.option("--rot-sigma", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--trans-sigma", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--snl", is_flag=True, help="convert to sensor-network localization")
@click.option("--out", type=_output_file)
def generate_sfm(
    frames: int, points: int, obs: int, d: str, rot_sigma: float, trans_sigma: float, seed: int, snl: bool, out: Path | None
) -> int:
    """Bipartite frames/landmarks graph."""
    try:
        dataset = generate_bipartite_sfm(frames, points, obs, NoiseModel(rot_sigma, trans_sigma), seed, int(d))
    except ValueError as e:
        raise click.UsageError(str(e)) from e
    _emit(convert_to_snl(dataset) if snl else dataset, out)
    return ExitCode.OK


@cli.command("convert-snl")
@click.argument("input_path", type=_existing_file)
@click.option("--out", type=_output_file)
def convert_snl(input_path: Path, out: Path | None) -> int:
    """Turn poses into points and every translation into a range."""
    _emit(convert_to_snl(load(input_path)), out)
    return ExitCode.OK


@cli.command("bench")
@click.option("--input", "inputs", type=_existing_file, multiple=True)
@click.option("--generate", "generators", multiple=True, help='e.g. "grid rows=10 cols=10 trans_sigma=0.1 snl=true"')
@click.option("--method", "methods", type=_methods, multiple=True, help="default: all methods")
@click.option("--seeds", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--time-limit", type=click.FloatRange(min=0, min_open=True), default=600.0, show_default=True)
@click.option("--pct", type=click.FloatRange(min=0), default=1.0, show_default=True, help="convergence threshold in percent")
@click.option("--runs-out", type=_output_file, help="per-run CSV")
@click.option("--out", type=_output_file, help="summary CSV")
@click.option("--parallel", is_flag=True, help="run independent trials concurrently")
def bench(
    inputs: tuple[Path, ...],
    generators: tuple[str, ...],
    methods: tuple[str, ...],
    seeds: int,
    time_limit: float,
    pct: float,
    runs_out: Path | None,
    out: Path | None,
    parallel: bool,
) -> int:
    """Solve every dataset with every method from several random starts."""
    if not inputs and not generators:
        raise click.UsageError("give at least one --input or --generate")
    try:
        sources = list(inputs) + [parse_generator_spec(text) for text in generators]
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--generate") from e
    spec = BenchSpec(sources, methods or tuple(Method), seeds, time_limit, pct, parallel)
    runs = run_bench(spec)
    rows = summarize(runs, pct)
    if runs_out is not None:
        with open(runs_out, "w", encoding="utf-8", newline="") as f:
            write_runs_csv(runs, f)
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as f:
            write_summary_csv(rows, f)
    click.echo(format_summary(rows, pct))
    return ExitCode.OK


@cli.command("verify")
@click.option("--trials", type=click.IntRange(min=1), default=DEFAULT_TRIALS, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--inject-fault", type=click.Choice(["non-incidence"]))
def verify(trials: int, seed: int, inject_fault: str | None) -> int:
    """Check the Schur operator and the geometry against dense references."""
    report = run_verification(trials, seed, inject_fault)
    for check, error in report.max_errors.items():
        click.echo(f"{check:<16} max error {error:.3e}")
    for failure in report.failures:
        click.echo(f"FAIL {failure}", err=True)
    if not report.passed:
        return ExitCode.ERROR
    click.echo(f"all checks passed over {trials} trials")
    return ExitCode.OK


def main(argv: list[str] | None = None) -> int:
    """Run the command line and map failures to exit codes."""
    try:
        rv = cli.main(args=argv, prog_name="schur-varpro", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return ExitCode.USAGE
    except DATA_ERRORS as e:
        click.echo(f"error: {e}", err=True)
        return ExitCode.DATA
    except (SchurVarproError, click.ClickException, click.Abort, OSError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        return ExitCode.ERROR
    return int(rv) if isinstance(rv, int) else ExitCode.OK


def run() -> None:
    sys.exit(main())
