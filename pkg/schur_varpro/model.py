"""
Variables, measurements and the partitioned quadratic model Q = AᵀΩA.

Storage convention: a Rotation block of X holds Rᵀ in d consecutive rows, so
every residual is a constant linear map applied to X from the left:

    RelRotation(i, j)     d rows   +I on j, -R̃ᵀ on i              weight kappa
    RelTranslation(i, j)  1 row    +1 on t_j, -1 on t_i, -t̃ᵀ on R_i  weight tau
    Range(i, j)           1 row    +1 on t_j, -1 on t_i, -d̃ on u    weight rho
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from logging import getLogger
from typing import TypeAlias

import attrs
import numpy as np
import scipy.sparse as sp

from .enums import BlockKind
from .errors import AssemblyError, DimensionError

logger = getLogger(__name__)


@attrs.frozen
class Block:
    id: str
    kind: BlockKind
    start: int
    stop: int

    @property
    def rows(self) -> slice:
        return slice(self.start, self.stop)

    @property
    def constrained(self) -> bool:
        return self.kind.constrained

    def __len__(self) -> int:
        return self.stop - self.start


@attrs.frozen
class VariableLayout:
    """Row ranges of named variable blocks inside the stacked X ∈ ℝ^{n×d}.

    Rows are ordered Rotation blocks, then UnitVector blocks, then Point
    blocks, so all constrained rows come first.
    """

    d: int
    blocks: tuple[Block, ...]
    _index: dict[str, int] = attrs.field(repr=False, eq=False)

    @classmethod
    def build(cls, d: int, entries: Iterable[tuple[str, BlockKind]]) -> VariableLayout:
        if d not in (2, 3):
            raise AssemblyError(f"ambient dimension must be 2 or 3, got {d}")
        entries = list(entries)
        seen: set[str] = set()
        for block_id, _ in entries:
            if block_id in seen:
                raise AssemblyError(f"duplicate block id {block_id!r}")
            seen.add(block_id)
        # sorted() is stable: insertion order survives within a kind
        ordered = sorted(entries, key=lambda e: BlockKind(e[1]))
        blocks = []
        row = 0
        for block_id, kind in ordered:
            kind = BlockKind(kind)
            size = d if kind is BlockKind.ROTATION else 1
            blocks.append(Block(block_id, kind, row, row + size))
            row += size
        return cls(d, tuple(blocks), {b.id: k for k, b in enumerate(blocks)})

    def block(self, block_id: str) -> Block:
        try:
            return self.blocks[self._index[block_id]]
        except KeyError:
            raise AssemblyError(f"dangling block id {block_id!r}") from None

    def __contains__(self, block_id: str) -> bool:
        return block_id in self._index

    def count(self, kind: BlockKind) -> int:
        return sum(1 for b in self.blocks if b.kind is kind)

    @property
    def n_rotations(self) -> int:
        return self.count(BlockKind.ROTATION)

    @property
    def n_unit_vectors(self) -> int:
        return self.count(BlockKind.UNIT_VECTOR)

    @property
    def n_points(self) -> int:
        return self.count(BlockKind.POINT)

    @property
    def n_c(self) -> int:
        return self.d * self.n_rotations + self.n_unit_vectors

    @property
    def n_f(self) -> int:
        return self.n_points

    @property
    def n(self) -> int:
        return self.n_c + self.n_f

    @property
    def rotation_rows(self) -> slice:
        return slice(0, self.d * self.n_rotations)

    @property
    def unit_vector_rows(self) -> slice:
        return slice(self.d * self.n_rotations, self.n_c)

    @property
    def point_rows(self) -> slice:
        return slice(self.n_c, self.n)

    def blocks_of(self, kind: BlockKind) -> list[Block]:
        return [b for b in self.blocks if b.kind is kind]

    def check_shape(self, X: np.ndarray, rows: int | None = None) -> None:
        rows = self.n if rows is None else rows
        if X.shape != (rows, self.d):
            raise DimensionError(f"expected a {rows}x{self.d} matrix, got shape {X.shape}")


def _as_float_array(value) -> np.ndarray:
    return np.array(value, dtype=float)


def _positive(instance, attribute, value) -> None:
    if not value > 0:
        raise AssemblyError(f"{type(instance).__name__}.{attribute.name} must be positive, got {value}")


@attrs.frozen(eq=False)
class RelRotation:
    i: str
    j: str
    R_meas: np.ndarray = attrs.field(converter=_as_float_array)
    kappa: float = attrs.field(converter=float, validator=_positive)


@attrs.frozen(eq=False)
class RelTranslation:
    """t_j - t_i - R_i t̃, expressed in the frame of rotation block `frame`."""

    i: str
    j: str
    frame: str
    t_meas: np.ndarray = attrs.field(converter=_as_float_array)
    tau: float = attrs.field(converter=float, validator=_positive)


@attrs.frozen(eq=False)
class Range:
    i: str
    j: str
    bearing: str
    dist: float = attrs.field(converter=float)
    rho: float = attrs.field(converter=float, validator=_positive)

    @dist.validator
    def _check_dist(self, attribute, value) -> None:
        if value < 0:
            raise AssemblyError(f"Range.dist must be nonnegative, got {value}")


Measurement: TypeAlias = RelRotation | RelTranslation | Range


def measurement_rows(m: Measurement, d: int) -> int:
    return d if isinstance(m, RelRotation) else 1


@attrs.frozen(eq=False)
class QuadraticModel:
    """Problem data: sparse A_c, A_f, diagonal Ω and Q_cc = A_cᵀΩA_c."""

    layout: VariableLayout
    A_c: sp.csc_matrix
    A_f: sp.csc_matrix
    Omega: sp.dia_matrix
    Q_cc: sp.csr_matrix
    A: sp.csr_matrix = attrs.field(repr=False)

    @property
    def weights(self) -> np.ndarray:
        return self.Omega.diagonal()

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def residuals(self, X: np.ndarray) -> np.ndarray:
        self.layout.check_shape(X)
        return self.A @ X

    def cost(self, X: np.ndarray) -> float:
        """tr(XᵀQX) as ‖Ω^{1/2}AX‖²_F without forming Q."""
        Y = self.residuals(X)
        return float(np.sum(Y * (self.weights[:, None] * Y)))

    def full_matvec(self, X: np.ndarray) -> np.ndarray:
        """Q·X = AᵀΩ(AX)."""
        self.layout.check_shape(X)
        return self.A.T @ (self.weights[:, None] * (self.A @ X))

    def full_Q(self) -> sp.csc_matrix:
        Q = (self.A.T @ self.Omega @ self.A).tocsc()
        return (0.5 * (Q + Q.T)).tocsc()

    def split(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n_c = self.layout.n_c
        return X[:n_c], X[n_c:]


def _check_kind(layout: VariableLayout, block_id: str, kind: BlockKind, where: str) -> int:
    block = layout.block(block_id)
    if block.kind is not kind:
        raise AssemblyError(f"{where}: block {block_id!r} is a {block.kind.name}, expected {kind.name}")
    return block.start


def assemble(measurements: Sequence[Measurement], layout: VariableLayout) -> QuadraticModel:
    """Stack the residual Jacobians of `measurements` into the partitioned model."""
    if not measurements:
        raise AssemblyError("cannot assemble a model from zero measurements")
    d = layout.d
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    r = 0
    for k, m in enumerate(measurements):
        where = f"measurement {k}"
        if m.i == m.j:
            raise AssemblyError(f"{where}: endpoints must differ, got {m.i!r} twice")
        match m:
            case RelRotation():
                if m.R_meas.shape != (d, d):
                    raise AssemblyError(f"{where}: R_meas must be {d}x{d}, got {m.R_meas.shape}")
                bi = _check_kind(layout, m.i, BlockKind.ROTATION, where)
                bj = _check_kind(layout, m.j, BlockKind.ROTATION, where)
                out = np.arange(r, r + d)
                rows.append(out)
                cols.append(bj + np.arange(d))
                vals.append(np.ones(d))
                rr, cc = np.meshgrid(out, bi + np.arange(d), indexing="ij")
                rows.append(rr.ravel())
                cols.append(cc.ravel())
                vals.append(-m.R_meas.T.ravel())
                weights.append(np.full(d, m.kappa))
                r += d
            case RelTranslation():
                if m.t_meas.shape != (d,):
                    raise AssemblyError(f"{where}: t_meas must have length {d}, got shape {m.t_meas.shape}")
                pi = _check_kind(layout, m.i, BlockKind.POINT, where)
                pj = _check_kind(layout, m.j, BlockKind.POINT, where)
                fr = _check_kind(layout, m.frame, BlockKind.ROTATION, where)
                rows.append(np.full(d + 2, r))
                cols.append(np.concatenate(([pj, pi], fr + np.arange(d))))
                vals.append(np.concatenate(([1.0, -1.0], -m.t_meas)))
                weights.append(np.array([m.tau]))
                r += 1
            case Range():
                pi = _check_kind(layout, m.i, BlockKind.POINT, where)
                pj = _check_kind(layout, m.j, BlockKind.POINT, where)
                u = _check_kind(layout, m.bearing, BlockKind.UNIT_VECTOR, where)
                rows.append(np.full(3, r))
                cols.append(np.array([pj, pi, u]))
                vals.append(np.array([1.0, -1.0, -m.dist]))
                weights.append(np.array([m.rho]))
                r += 1
            case _:
                raise AssemblyError(f"{where}: unknown measurement type {type(m).__name__}")

    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(r, layout.n),
    ).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    omega = np.concatenate(weights)
    Omega = sp.diags(omega, format="dia")

    A_csc = A.tocsc()
    A_c = A_csc[:, : layout.n_c].tocsc()
    A_f = A_csc[:, layout.n_c :].tocsc()
    Q = (A_c.T @ Omega @ A_c).tocsr()
    # averaging with the transpose makes the stored matrix exactly symmetric
    Q_cc = (0.5 * (Q + Q.T)).tocsr()
    logger.debug(f"assembled {len(measurements)} measurements into {r} rows, n_c={layout.n_c} n_f={layout.n_f}, nnz(A)={A.nnz}")
    return QuadraticModel(layout=layout, A_c=A_c, A_f=A_f, Omega=Omega, Q_cc=Q_cc, A=A)


def cost(model: QuadraticModel, X: np.ndarray) -> float:
    return model.cost(X)


def measurement_cost(measurements: Sequence[Measurement], layout: VariableLayout, X: np.ndarray) -> float:
    """Σ‖r_i(X)‖²_{Ω_i} evaluated directly from the residual formulas in R-form."""
    layout.check_shape(X)
    total = 0.0
    for m in measurements:
        match m:
            case RelRotation():
                R_i = X[layout.block(m.i).rows].T
                R_j = X[layout.block(m.j).rows].T
                total += m.kappa * float(np.sum((R_j - R_i @ m.R_meas) ** 2))
            case RelTranslation():
                t_i = X[layout.block(m.i).start]
                t_j = X[layout.block(m.j).start]
                R_i = X[layout.block(m.frame).rows].T
                total += m.tau * float(np.sum((t_j - t_i - R_i @ m.t_meas) ** 2))
            case Range():
                t_i = X[layout.block(m.i).start]
                t_j = X[layout.block(m.j).start]
                u = X[layout.block(m.bearing).start]
                total += m.rho * float(np.sum((t_j - t_i - u * m.dist) ** 2))
    return total
