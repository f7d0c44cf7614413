"""
Field-by-field differences between two Datasets.

Used to check that g2o output parses back to the same problem. Floats and
arrays compare within a tolerance; every difference carries a path such as
`measurements[3].t_meas[1]`.
"""

from __future__ import annotations

import math
from typing import Any

import attrs
import numpy as np

from .dataset import Dataset


@attrs.frozen
class Diff:
    path: str
    expected: Any
    actual: Any

    def __str__(self) -> str:
        return f"{self.path}: {self.expected!r} -> {self.actual!r}"


@attrs.define
class CompareResult:
    diffs: list[Diff] = attrs.field(factory=list)

    @property
    def identical(self) -> bool:
        return not self.diffs

    def __bool__(self) -> bool:
        """Truthy when differences were found."""
        return bool(self.diffs)

    def report(self, max_diffs: int = 50) -> str:
        if self.identical:
            return "Datasets are identical"
        lines = [f"Found {len(self.diffs)} difference(s):"]
        lines += [f"  {diff}" for diff in self.diffs[:max_diffs]]
        if len(self.diffs) > max_diffs:
            lines.append(f"  ... and {len(self.diffs) - max_diffs} more")
        return "\n".join(lines)


@attrs.frozen
class Tolerance:
    rel: float = 1e-9
    abs: float = 1e-12


def compare_values(path: str, expected: Any, actual: Any, tol: Tolerance = Tolerance()) -> list[Diff]:
    """Compare scalars, strings, enums and numpy arrays."""
    if expected is None or actual is None:
        return [] if expected is actual else [Diff(path, expected, actual)]
    if isinstance(expected, np.ndarray) or isinstance(actual, np.ndarray):
        expected, actual = np.asarray(expected), np.asarray(actual)
        if expected.shape != actual.shape:
            return [Diff(f"{path}.shape", expected.shape, actual.shape)]
        if np.allclose(actual, expected, rtol=tol.rel, atol=tol.abs):
            return []
        # worst entry only
        idx = np.unravel_index(np.argmax(np.abs(expected - actual)), expected.shape)
        return [Diff(path + "".join(f"[{int(i)}]" for i in idx), float(expected[idx]), float(actual[idx]))]
    if isinstance(expected, float) or isinstance(actual, float):
        return [] if math.isclose(expected, actual, rel_tol=tol.rel, abs_tol=tol.abs) else [Diff(path, expected, actual)]
    if type(expected) is not type(actual) or expected != actual:
        return [Diff(path, expected, actual)]
    return []


def _compare_records(path: str, expected: list, actual: list, tol: Tolerance) -> list[Diff]:
    """Pairwise attrs-field comparison; a length mismatch is one diff on `len(path)`."""
    diffs = [] if len(expected) == len(actual) else [Diff(f"len({path})", len(expected), len(actual))]
    for i, (e, a) in enumerate(zip(expected, actual)):
        if type(e) is not type(a):
            diffs.append(Diff(f"{path}[{i}]", type(e).__name__, type(a).__name__))
            continue
        for field in attrs.fields(type(e)):
            diffs += compare_values(f"{path}[{i}].{field.name}", getattr(e, field.name), getattr(a, field.name), tol)
    return diffs


def compare_datasets(
    expected: Dataset,
    actual: Dataset,
    *,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-12,
    max_diffs: int | None = None,
) -> CompareResult:
    """Compare layout, measurements and (when both have one) ground truth."""
    tol = Tolerance(rel_tol, abs_tol)
    diffs = compare_values("d", expected.d, actual.d, tol)
    diffs += _compare_records("blocks", list(expected.layout.blocks), list(actual.layout.blocks), tol)
    diffs += _compare_records("measurements", list(expected.measurements), list(actual.measurements), tol)
    if expected.ground_truth is not None and actual.ground_truth is not None:
        diffs += compare_values("ground_truth", expected.ground_truth, actual.ground_truth, tol)
    elif (expected.ground_truth is None) != (actual.ground_truth is None):
        diffs.append(Diff("ground_truth", expected.ground_truth is not None, actual.ground_truth is not None))
    if max_diffs is not None:
        diffs = diffs[:max_diffs]
    return CompareResult(diffs)
