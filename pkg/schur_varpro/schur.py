"""
Matrix-free Schur complement of the unconstrained block.

When A_f is an incidence matrix, dropping one column per connected component
gives a basis C of col(A_f) and

    Q̄ = Q_cc - Bᵀ (CᵀΩC)⁻¹ B,    B = CᵀΩA_c,

where CᵀΩC is a weighted reduced graph Laplacian (positive definite). It is
factorized once; each product Q̄·X_c costs two sparse triangular solves.
"""
from __future__ import annotations

from logging import getLogger

import attrs
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .cholesky import Backend, Ordering, SparseCholesky, factorize
from .enums import RecoverMode
from .errors import DimensionError, NonIncidenceError, OracleSizeError
from .model import QuadraticModel

logger = getLogger(__name__)


@attrs.frozen(eq=False)
class UnconstrainedGraph:
    """Graph whose incidence matrix is A_f; one edge per nonzero row."""

    node_count: int
    rows: np.ndarray  # A_f row of each edge
    i: np.ndarray  # column holding +1
    j: np.ndarray  # column holding -1
    labels: np.ndarray  # component label per node

    @property
    def edges(self) -> list[tuple[int, int, int]]:
        return list(zip(self.rows.tolist(), self.i.tolist(), self.j.tolist()))

    @property
    def n_components(self) -> int:
        return int(self.labels.max()) + 1 if self.node_count else 0

    @property
    def components(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == c) for c in range(self.n_components)]


def detect_incidence(A_f: sp.spmatrix) -> UnconstrainedGraph:
    """Read A_f as an incidence matrix; zero rows carry no edge."""
    A = sp.csr_matrix(A_f, copy=True)
    A.eliminate_zeros()
    A.sort_indices()
    n_f = A.shape[1]
    nnz = np.diff(A.indptr)
    bad = (nnz != 0) & (nnz != 2)
    pair_rows = np.flatnonzero(nnz == 2)
    first = A.indptr[pair_rows]
    a, b = A.data[first], A.data[first + 1]
    ok = ((a == 1.0) & (b == -1.0)) | ((a == -1.0) & (b == 1.0))
    bad[pair_rows[~ok]] = True
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        values = A.data[A.indptr[row] : A.indptr[row + 1]]
        raise NonIncidenceError(row, f"entries {values.tolist()}")

    ca, cb = A.indices[first], A.indices[first + 1]
    plus = np.where(a == 1.0, ca, cb)
    minus = np.where(a == 1.0, cb, ca)
    adjacency = sp.coo_matrix((np.ones(len(pair_rows)), (plus, minus)), shape=(n_f, n_f))
    if n_f:
        _, labels = connected_components(adjacency, directed=False)
    else:
        labels = np.zeros(0, dtype=int)
    graph = UnconstrainedGraph(n_f, pair_rows, plus, minus, labels.astype(int))
    logger.debug(f"unconstrained graph: {n_f} nodes, {len(pair_rows)} edges, {graph.n_components} component(s)")
    return graph


@attrs.frozen(eq=False)
class SchurOperator:
    """Precomputed state of the matrix-free Schur complement product."""

    dropped_columns: np.ndarray
    retained_columns: np.ndarray
    B: sp.csr_matrix  # r × n_c, CᵀΩA_c
    laplacian: sp.csc_matrix  # CᵀΩC
    factor: SparseCholesky
    Q_cc: sp.csr_matrix
    graph: UnconstrainedGraph
    d: int

    @property
    def n_c(self) -> int:
        return self.Q_cc.shape[0]

    @property
    def n_f(self) -> int:
        return self.graph.node_count

    @property
    def r(self) -> int:
        return len(self.retained_columns)

    @property
    def n_components(self) -> int:
        return self.graph.n_components

    def _check(self, Xc: np.ndarray) -> None:
        if Xc.shape != (self.n_c, self.d):
            raise DimensionError(f"expected a {self.n_c}x{self.d} matrix, got shape {Xc.shape}")

    def apply(self, Xc: np.ndarray) -> np.ndarray:
        """Q̄·X_c."""
        self._check(Xc)
        out = self.Q_cc @ Xc
        if self.r:
            out = out - self.B.T @ self.factor.solve(self.B @ Xc)
        return np.asarray(out)

    def reduced_cost_and_grad(self, Xc: np.ndarray) -> tuple[float, np.ndarray]:
        QX = self.apply(Xc)
        return float(np.sum(Xc * QX)), 2.0 * QX

    def reduced_cost(self, Xc: np.ndarray) -> float:
        return self.reduced_cost_and_grad(Xc)[0]

    def reduced_grad(self, Xc: np.ndarray) -> np.ndarray:
        return self.reduced_cost_and_grad(Xc)[1]

    def recover_unconstrained(self, Xc: np.ndarray, mode: RecoverMode = RecoverMode.ANCHORED) -> np.ndarray:
        """Conditional minimizer X_f*(X_c); dropped rows are zero in anchored mode."""
        self._check(Xc)
        Xf = np.zeros((self.n_f, self.d))
        if self.r:
            Xf[self.retained_columns] = self.factor.solve(-(self.B @ Xc))
        if RecoverMode(mode) is RecoverMode.MIN_NORM and self.n_f:
            labels = self.graph.labels
            sums = np.zeros((self.n_components, self.d))
            np.add.at(sums, labels, Xf)
            counts = np.bincount(labels, minlength=self.n_components)
            Xf -= sums[labels] / counts[labels, None]
        return Xf


def build_operator(
    model: QuadraticModel,
    graph: UnconstrainedGraph | None = None,
    *,
    ordering: Ordering = "amd",
    backend: Backend = "superlu",
) -> SchurOperator:
    """Drop the highest-index node of each component, factor CᵀΩC and form B = CᵀΩA_c."""
    if graph is None:
        graph = detect_incidence(model.A_f)
    n_f = graph.node_count
    dropped = np.full(graph.n_components, -1, dtype=int)
    np.maximum.at(dropped, graph.labels, np.arange(n_f))
    keep = np.ones(n_f, dtype=bool)
    keep[dropped] = False
    retained = np.flatnonzero(keep)

    C = model.A_f[:, retained]
    OmegaC = model.Omega @ C
    lap = (C.T @ OmegaC).tocsc()
    lap = (0.5 * (lap + lap.T)).tocsc()
    B = (OmegaC.T @ model.A_c).tocsr()
    factor = factorize(lap, ordering=ordering, backend=backend)
    logger.info(f"schur operator: n_c={model.layout.n_c} n_f={n_f} r={len(retained)} components={graph.n_components} nnz(L)={factor.nnz}")
    return SchurOperator(
        dropped_columns=dropped,
        retained_columns=retained,
        B=B,
        laplacian=lap,
        factor=factor,
        Q_cc=model.Q_cc,
        graph=graph,
        d=model.layout.d,
    )


def spectral_pinv(M: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Pseudoinverse of a symmetric matrix, eigenvalues ≤ rtol·λ_max treated as zero."""
    if M.size == 0:
        return np.zeros_like(M)
    w, V = scipy.linalg.eigh(M)
    lam_max = np.max(np.abs(w))
    if lam_max == 0:
        return np.zeros_like(M)
    keep = w > rtol * lam_max
    Vk = V[:, keep]
    return (Vk / w[keep]) @ Vk.T


def dense_schur_complement(Q: np.ndarray, n_c: int) -> np.ndarray:
    """Q_cc - Q_cf Q_ff^† Q_fc for a dense symmetric Q split after row n_c."""
    Q_cc, Q_cf = Q[:n_c, :n_c], Q[:n_c, n_c:]
    Q_ff = Q[n_c:, n_c:]
    Qbar = Q_cc - Q_cf @ spectral_pinv(Q_ff) @ Q_cf.T
    return 0.5 * (Qbar + Qbar.T)


def dense_oracle(model: QuadraticModel, cap: int = 500) -> np.ndarray:
    """Dense reference Schur complement of `model`; test use only."""
    n = model.layout.n
    if n > cap:
        raise OracleSizeError(f"dense oracle limited to {cap} rows, model has {n}")
    return dense_schur_complement(model.full_Q().toarray(), model.layout.n_c)
