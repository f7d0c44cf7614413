import csv
import json
from logging import getLogger
from pathlib import Path
from typing import Literal, TextIO

import cattrs
import numpy as np
from cattrs.gen import make_dict_structure_fn, make_dict_unstructure_fn, override

from .solver import IterationRecord, SolverReport

logger = getLogger(__name__)

TRACE_COLUMNS = ["iter", "cost", "grad_norm", "tr_radius", "inner_iters", "accepted", "elapsed_s"]

converter = cattrs.Converter()
converter.register_unstructure_hook(np.ndarray, lambda a: a.tolist())
converter.register_structure_hook(np.ndarray, lambda v, _: np.array(v, dtype=float))
_record_renames = {"outer_iter": override(rename="iter"), "elapsed_seconds": override(rename="elapsed_s")}
converter.register_unstructure_hook(IterationRecord, make_dict_unstructure_fn(IterationRecord, converter, **_record_renames))
converter.register_structure_hook(IterationRecord, make_dict_structure_fn(IterationRecord, converter, **_record_renames))


def _float(x: float) -> str:
    return repr(float(x))


def write_trace_csv(report: SolverReport, f: TextIO) -> None:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in report.records:
        writer.writerow(
            [r.outer_iter, _float(r.cost), _float(r.grad_norm), _float(r.tr_radius), r.inner_iters, int(r.accepted), _float(r.elapsed_seconds)]
        )


def read_trace_csv(f: TextIO) -> list[IterationRecord]:
    reader = csv.DictReader(f)
    if reader.fieldnames != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace columns {reader.fieldnames}")
    return [
        IterationRecord(
            outer_iter=int(row["iter"]),
            cost=float(row["cost"]),
            grad_norm=float(row["grad_norm"]),
            tr_radius=float(row["tr_radius"]),
            inner_iters=int(row["inner_iters"]),
            accepted=row["accepted"] == "1",
            elapsed_seconds=float(row["elapsed_s"]),
        )
        for row in reader
    ]


def to_json(report: SolverReport, indent: int | None = 2) -> str:
    return json.dumps(converter.unstructure(report), indent=indent)


def from_json(text: str) -> SolverReport:
    return converter.structure(json.loads(text), SolverReport)


def write_report(report: SolverReport, format: Literal["csv", "json"], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        match format:
            case "csv":
                write_trace_csv(report, f)
            case "json":
                f.write(to_json(report))
                f.write("\n")
            case _:
                raise ValueError(f"unknown report format {format!r}")
    logger.debug(f"wrote {format} report with {len(report.records)} records to {path}")


def read_report_json(path: str | Path) -> SolverReport:
    with open(path, "r", encoding="utf-8") as f:
        return from_json(f.read())
