"""
Datasets: a layout, its measurements and an optional ground-truth X.

Block ids follow one convention shared by the reader, writer and generators:
vertex k owns `R{k}` (its rotation, if it is a pose) and `t{k}` (its
position); the e-th range measurement owns the bearing `u{e}`.
"""
from __future__ import annotations

from logging import getLogger

import attrs
import numpy as np
import parse

from .enums import BlockKind
from .errors import AssemblyError
from .model import Measurement, QuadraticModel, Range, RelRotation, RelTranslation, VariableLayout, assemble

logger = getLogger(__name__)

_block_id_template = parse.compile("{prefix:l}{index:d}")
_PREFIX_KIND = {"R": BlockKind.ROTATION, "u": BlockKind.UNIT_VECTOR, "t": BlockKind.POINT}


def rotation_id(k: int) -> str:
    return f"R{k}"


def position_id(k: int) -> str:
    return f"t{k}"


def bearing_id(e: int) -> str:
    return f"u{e}"


def vertex_of(block_id: str) -> tuple[BlockKind, int] | None:
    """Split a conventional block id into (kind, index); None for foreign ids."""
    result = _block_id_template.parse(block_id)
    if result is None or result["prefix"] not in _PREFIX_KIND:
        return None
    return _PREFIX_KIND[result["prefix"]], result["index"]


@attrs.frozen(eq=False)
class Dataset:
    name: str
    layout: VariableLayout
    measurements: tuple[Measurement, ...] = attrs.field(converter=tuple)
    ground_truth: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.layout.d

    def model(self) -> QuadraticModel:
        return assemble(self.measurements, self.layout)

    def count(self, kind: type) -> int:
        return sum(1 for m in self.measurements if isinstance(m, kind))


@attrs.define
class DatasetBuilder:
    """Accumulates blocks (in first-reference order), measurements and ground-truth values."""

    d: int
    name: str = "dataset"
    _kinds: dict[str, BlockKind] = attrs.field(factory=dict)
    _values: dict[str, np.ndarray] = attrs.field(factory=dict)
    _measurements: list[Measurement] = attrs.field(factory=list)
    _n_ranges: int = 0

    def ensure_block(self, block_id: str, kind: BlockKind) -> str:
        known = self._kinds.get(block_id)
        if known is None:
            self._kinds[block_id] = kind
        elif known is not kind:
            raise AssemblyError(f"block {block_id!r} is already a {known.name}, cannot reuse it as {kind.name}")
        return block_id

    def add_pose(self, k: int, R: np.ndarray | None = None, t: np.ndarray | None = None) -> None:
        """Pose vertex k; R is the rotation matrix, stored transposed."""
        self.ensure_block(rotation_id(k), BlockKind.ROTATION)
        self.ensure_block(position_id(k), BlockKind.POINT)
        if R is not None:
            self._values[rotation_id(k)] = np.asarray(R, dtype=float).T.copy()
        if t is not None:
            self._values[position_id(k)] = np.asarray(t, dtype=float).reshape(1, self.d)

    def add_point(self, k: int, t: np.ndarray | None = None) -> None:
        self.ensure_block(position_id(k), BlockKind.POINT)
        if t is not None:
            self._values[position_id(k)] = np.asarray(t, dtype=float).reshape(1, self.d)

    def add_rel_translation(self, i: int, j: int, t_meas: np.ndarray, tau: float) -> None:
        self.ensure_block(rotation_id(i), BlockKind.ROTATION)
        self.ensure_block(position_id(i), BlockKind.POINT)
        self.ensure_block(position_id(j), BlockKind.POINT)
        self._measurements.append(RelTranslation(position_id(i), position_id(j), rotation_id(i), t_meas, tau))

    def add_rel_rotation(self, i: int, j: int, R_meas: np.ndarray, kappa: float) -> None:
        self.ensure_block(rotation_id(i), BlockKind.ROTATION)
        self.ensure_block(rotation_id(j), BlockKind.ROTATION)
        self._measurements.append(RelRotation(rotation_id(i), rotation_id(j), R_meas, kappa))

    def add_rel_pose(self, i: int, j: int, R_meas: np.ndarray, t_meas: np.ndarray, kappa: float, tau: float) -> None:
        """One SE edge: a RelTranslation followed by a RelRotation."""
        self.ensure_block(rotation_id(i), BlockKind.ROTATION)
        self.ensure_block(position_id(i), BlockKind.POINT)
        self.ensure_block(rotation_id(j), BlockKind.ROTATION)
        self.ensure_block(position_id(j), BlockKind.POINT)
        self.add_rel_translation(i, j, t_meas, tau)
        self.add_rel_rotation(i, j, R_meas, kappa)

    def add_range(self, i: int, j: int, dist: float, rho: float) -> str:
        self.ensure_block(position_id(i), BlockKind.POINT)
        self.ensure_block(position_id(j), BlockKind.POINT)
        u = self.ensure_block(bearing_id(self._n_ranges), BlockKind.UNIT_VECTOR)
        self._n_ranges += 1
        self._measurements.append(Range(position_id(i), position_id(j), u, dist, rho))
        return u

    def _bearing_values(self) -> None:
        for m in self._measurements:
            if not isinstance(m, Range) or m.bearing in self._values:
                continue
            if m.i not in self._values or m.j not in self._values:
                continue
            diff = (self._values[m.j] - self._values[m.i]).ravel()
            norm = np.linalg.norm(diff)
            u = diff / norm if norm > 0 else np.eye(self.d)[0]
            self._values[m.bearing] = u.reshape(1, self.d)

    def build(self) -> Dataset:
        layout = VariableLayout.build(self.d, self._kinds.items())
        self._bearing_values()
        ground_truth = None
        missing = [b for b in self._kinds if b not in self._values]
        if not missing:
            ground_truth = np.zeros((layout.n, self.d))
            for block in layout.blocks:
                ground_truth[block.rows] = self._values[block.id]
        else:
            logger.debug(f"{self.name}: no ground truth, {len(missing)} block(s) without a value (first {missing[0]!r})")
        logger.info(f"{self.name}: {len(layout.blocks)} blocks, {len(self._measurements)} measurements, d={self.d}")
        return Dataset(self.name, layout, self._measurements, ground_truth)
