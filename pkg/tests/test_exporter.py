"""
Tests for trace CSV and JSON report export.
"""
import io
import json

import numpy as np
import pytest

from schur_varpro.enums import Method, Termination
from schur_varpro.exporter import TRACE_COLUMNS, from_json, read_report_json, read_trace_csv, to_json, write_report, write_trace_csv
from schur_varpro.solver import IterationRecord, SolverConfig, SolverReport


@pytest.fixture
def report():
    records = [
        IterationRecord(0, 10.0, 4.0, 1.0, 0, True, 0.001),
        IterationRecord(1, 10.0, 4.0, 0.25, 3, False, 0.0025),
        IterationRecord(2, 2.5, 0.1, 0.5, 2, True, 0.004),
    ]
    return SolverReport(
        method=Method.OURS,
        termination=Termination.GRADIENT,
        records=records,
        X=np.arange(6.0).reshape(3, 2),
        X_f=np.array([[4.0, 5.0]]),
        final_cost=2.5,
        config=SolverConfig(grad_tol=1e-4, seed=3),
    )


class TestTraceCsv:

    def test_header_and_rows(self, report):
        out = io.StringIO()
        write_trace_csv(report, out)
        lines = out.getvalue().splitlines()
        assert lines[0] == "iter,cost,grad_norm,tr_radius,inner_iters,accepted,elapsed_s"
        assert lines[2] == "1,10.0,4.0,0.25,3,0,0.0025"
        assert len(lines) == 1 + len(report.records)

    def test_read_back(self, report):
        out = io.StringIO()
        write_trace_csv(report, out)
        out.seek(0)
        assert read_trace_csv(out) == report.records

    def test_wrong_columns(self):
        with pytest.raises(ValueError, match="unexpected trace columns"):
            read_trace_csv(io.StringIO("iter,cost\n0,1.0\n"))

    def test_column_names(self):
        assert TRACE_COLUMNS[0] == "iter"
        assert TRACE_COLUMNS[-1] == "elapsed_s"


class TestJson:

    def test_field_names(self, report):
        data = json.loads(to_json(report))
        assert data["method"] == "ours"
        assert data["termination"] == "gradient"
        assert data["records"][0] == {
            "iter": 0,
            "cost": 10.0,
            "grad_norm": 4.0,
            "tr_radius": 1.0,
            "inner_iters": 0,
            "accepted": True,
            "elapsed_s": 0.001,
        }
        assert data["X_f"] == [[4.0, 5.0]]
        assert data["config"]["recover_mode"] == "anchored"

    def test_round_trip(self, report):
        again = from_json(to_json(report))
        assert again.method is Method.OURS
        assert again.termination is Termination.GRADIENT
        assert again.records == report.records
        np.testing.assert_array_equal(again.X, report.X)
        np.testing.assert_array_equal(again.X_f, report.X_f)
        assert again.config == report.config
        assert again.converged

    def test_files(self, report, tmp_path):
        write_report(report, "json", tmp_path / "r.json")
        assert read_report_json(tmp_path / "r.json").final_cost == 2.5
        write_report(report, "csv", tmp_path / "r.csv")
        with open(tmp_path / "r.csv", encoding="utf-8", newline="") as f:
            assert len(read_trace_csv(f)) == 3

    def test_unknown_format(self, report, tmp_path):
        with pytest.raises(ValueError, match="unknown report format"):
            write_report(report, "xml", tmp_path / "r.xml")
