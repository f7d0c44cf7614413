"""
Tests for the benchmark runner and its aggregation.
"""
import io
import math

import attrs
import pytest

from schur_varpro import bench
from schur_varpro.bench import (
    BenchRun,
    BenchSpec,
    GridSpec,
    SfmSpec,
    best_costs,
    format_summary,
    mark_converged,
    parse_generator_spec,
    read_runs_csv,
    run_bench,
    summarize,
    write_runs_csv,
    write_summary_csv,
)
from schur_varpro.enums import Method
from schur_varpro.errors import NonIncidenceError
from schur_varpro.solver import SolverConfig


def runs_for(dataset, method, times, iters=None, cost=1.0, termination="gradient"):
    iters = iters or [10 * (k + 1) for k in range(len(times))]
    return [BenchRun(dataset, method, seed, termination, cost, n, t) for seed, (t, n) in enumerate(zip(times, iters))]


@pytest.fixture
def hand_runs():
    """OURS twice as fast as ORIGINAL; ORIGINAL_VARPRO always times out."""
    return (
        runs_for("a", Method.OURS, [5.0, 1.0, 3.0, 2.0, 4.0], [50, 10, 30, 20, 40])
        + runs_for("a", Method.ORIGINAL, [2.0, 4.0, 6.0, 8.0, 10.0], [60, 120, 180, 240, 300])
        + runs_for("a", Method.ORIGINAL_VARPRO, [9.0] * 5, termination="timeout")
    )


class TestGeneratorSpec:

    def test_grid(self):
        spec = parse_generator_spec("grid rows=3 cols=4 trans_sigma=0.1 snl=true")
        assert spec == GridSpec(rows=3, cols=4, trans_sigma=0.1, snl=True)

    def test_sfm(self):
        assert parse_generator_spec("sfm frames=4 points=6 obs=2") == SfmSpec(frames=4, points=6, obs=2)

    def test_builds(self):
        dataset = parse_generator_spec("grid rows=2 cols=3 seed=4").build()
        assert dataset.name == "grid2x3-d2-s4"
        assert parse_generator_spec("grid rows=2 cols=2 snl=1").build().name.endswith("-snl")

    @pytest.mark.parametrize(
        "text, message",
        [
            ("", "empty generator spec"),
            ("mesh rows=1", "unknown generator"),
            ("grid rows", "expected key=value"),
            ("grid rows=3 cols=3 colour=red", "unknown parameter"),
            ("grid rows=x cols=3", "invalid parameters"),
            ("grid rows=3 cols=3 snl=maybe", "invalid parameters"),
        ],
    )
    def test_errors(self, text, message):
        with pytest.raises(ValueError, match=message):
            parse_generator_spec(text)


class TestBenchSpec:

    def test_defaults(self):
        spec = BenchSpec(["x.g2o"])
        assert spec.methods == (Method.OURS, Method.ORIGINAL, Method.ORIGINAL_VARPRO)
        assert spec.seeds == 5
        assert spec.convergence_pct == 1.0

    def test_methods_from_strings(self):
        assert BenchSpec(["x.g2o"], methods=["original-varpro"]).methods == (Method.ORIGINAL_VARPRO,)

    def test_solver_config_time_limit(self):
        spec = BenchSpec(["x.g2o"], time_limit_s=7.0, config=SolverConfig(grad_tol=1e-3))
        config = spec.solver_config()
        assert (config.max_time, config.grad_tol) == (7.0, 1e-3)

    @pytest.mark.parametrize(
        "kwargs", [dict(datasets=[]), dict(datasets=["x"], seeds=0), dict(datasets=["x"], methods=["fast"]), dict(datasets=["x"], time_limit_s=0)]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            BenchSpec(**kwargs)


class TestConvergence:

    def test_best_costs_skip_failures(self):
        runs = [BenchRun("a", Method.OURS, 0, "gradient", 2.0), BenchRun("a", Method.OURS, 1, "error", error="boom")]
        assert best_costs(runs) == {"a": 2.0}

    def test_threshold(self):
        runs = [
            BenchRun("a", Method.OURS, 0, "gradient", 100.0),
            BenchRun("a", Method.OURS, 1, "gradient", 100.9),
            BenchRun("a", Method.OURS, 2, "gradient", 101.1),
        ]
        assert [r.converged for r in mark_converged(runs, 1.0)] == [True, True, False]
        assert all(r.converged for r in mark_converged(runs, 5.0))

    def test_zero_minimum_slack(self):
        runs = [BenchRun("a", Method.OURS, 0, "gradient", 0.0), BenchRun("a", Method.ORIGINAL, 0, "gradient", 5e-9)]
        assert all(r.converged for r in mark_converged(runs))

    def test_timeout_never_converges(self):
        runs = [BenchRun("a", Method.OURS, 0, "timeout", 1.0), BenchRun("a", Method.ORIGINAL, 0, "gradient", 2.0)]
        assert [r.converged for r in mark_converged(runs)] == [False, False]

    def test_failed_run(self):
        run = BenchRun("a", Method.OURS, 0, "gradient", math.nan)
        assert run.failed
        assert not mark_converged([run])[0].converged


class TestSummarize:

    def test_medians_and_factors(self, hand_runs):
        rows = {row.method: row for row in summarize(hand_runs)}
        ours, original, varpro = rows[Method.OURS], rows[Method.ORIGINAL], rows[Method.ORIGINAL_VARPRO]
        assert (ours.runs, ours.converged, ours.median_time_s, ours.median_iters) == (5, 5, 3.0, 30.0)
        assert (original.median_time_s, original.median_iters) == (6.0, 180.0)
        assert original.time_factor == pytest.approx(2.0)
        assert original.iter_factor == pytest.approx(6.0)
        assert ours.time_factor is None

    def test_no_converged_runs(self, hand_runs):
        varpro = next(r for r in summarize(hand_runs) if r.method is Method.ORIGINAL_VARPRO)
        assert (varpro.runs, varpro.converged) == (5, 0)
        assert varpro.median_time_s is None
        assert varpro.time_factor is None

    def test_row_order(self, hand_runs):
        rows = summarize(runs_for("b", Method.ORIGINAL, [1.0]) + hand_runs)
        assert [(r.dataset, r.method) for r in rows][:2] == [("b", Method.ORIGINAL), ("a", Method.OURS)]

    def test_format(self, hand_runs):
        text = format_summary(summarize(hand_runs), 1.0)
        lines = text.splitlines()
        assert lines[0].startswith("reference minimum: best final cost over all runs")
        assert "within 1% of it" in lines[0]
        varpro = next(line for line in lines if "original-varpro" in line)
        assert "0/5" in varpro
        assert varpro.split()[-1] == "-"

    def test_summary_csv(self, hand_runs):
        out = io.StringIO()
        write_summary_csv(summarize(hand_runs), out)
        lines = out.getvalue().splitlines()
        assert lines[0] == "dataset,method,runs,converged,median_time_s,median_iters,time_factor,iter_factor"
        assert lines[1] == "a,ours,5,5,3.0,30.0,-,-"
        assert lines[3] == "a,original-varpro,5,0,-,-,-,-"


class TestRunsCsv:

    def test_reaggregation_is_deterministic(self, hand_runs):
        runs = hand_runs + [BenchRun("a", Method.OURS, 5, "error", error="NonIncidence: row 3")]
        out = io.StringIO()
        write_runs_csv(mark_converged(runs), out)
        out.seek(0)
        again = read_runs_csv(out)
        assert again[-1].error == "NonIncidence: row 3"
        assert math.isnan(again[-1].final_cost)
        assert [r.converged for r in again] == [r.converged for r in mark_converged(runs)]
        assert summarize(again) == summarize(runs)

    def test_wrong_columns(self):
        with pytest.raises(ValueError, match="unexpected run columns"):
            read_runs_csv(io.StringIO("dataset,method\n"))


class TestRunBench:

    @pytest.fixture
    def spec(self):
        return BenchSpec(
            [GridSpec(rows=2, cols=3, seed=1)],
            seeds=2,
            time_limit_s=60.0,
            config=SolverConfig(grad_tol=1e-4, max_outer_iters=200),
        )

    def test_runs(self, spec):
        runs = run_bench(spec)
        assert len(runs) == 3 * 2
        assert {r.dataset for r in runs} == {"grid2x3-d2-s1"}
        assert not any(r.failed for r in runs)
        assert {r.termination for r in runs} <= {"gradient", "max_iters"}
        assert any(r.converged for r in runs)

    def test_parallel_matches_serial_shape(self, spec):
        runs = run_bench(attrs.evolve(spec, parallel=True))
        assert sorted((r.method.value, r.seed) for r in runs) == sorted((m.value, s) for m in Method for s in range(2))

    def test_missing_file(self, tmp_path):
        runs = run_bench(BenchSpec([str(tmp_path / "missing.g2o")], methods=["ours"], seeds=2))
        assert len(runs) == 2
        assert all(r.termination == "error" and not r.converged for r in runs)

    def test_non_incidence_falls_back_to_original(self, spec, monkeypatch):
        original_build = bench.ProblemContext.build

        def build(model, config=None, need_operator=True):
            if need_operator:
                raise NonIncidenceError(0)
            return original_build(model, config, need_operator=False)

        monkeypatch.setattr(bench.ProblemContext, "build", build)
        runs = run_bench(spec)
        failed = [r for r in runs if r.failed]
        assert {r.method for r in failed} == {Method.OURS, Method.ORIGINAL_VARPRO}
        assert all(r.error.startswith("NonIncidence") for r in failed)
        assert {r.method for r in runs if not r.failed} == {Method.ORIGINAL}
