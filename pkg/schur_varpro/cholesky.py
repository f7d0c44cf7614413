"""
Sparse Cholesky factorization with a fill-reducing ordering.

Factors satisfy A[perm][:, perm] = L Lᵀ. Two backends:

    superlu  scipy's SuperLU run in symmetric mode with diagonal pivoting;
             L = L_unit · diag(√pivots). Always available.
    cholmod  scikit-sparse, when installed (`pip install schur-varpro[cholmod]`).
"""
from __future__ import annotations

from logging import getLogger
from typing import Any, Literal

import attrs
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import FactorizationError

try:
    from sksparse import cholmod
except ImportError:  # optional extra
    cholmod = None

logger = getLogger(__name__)

Ordering = Literal["amd", "colamd", "natural"]
Backend = Literal["superlu", "cholmod"]

_SUPERLU_ORDERING = {"amd": "MMD_AT_PLUS_A", "colamd": "COLAMD", "natural": "NATURAL"}
_CHOLMOD_ORDERING = {"amd": "amd", "colamd": "colamd", "natural": "natural"}


@attrs.frozen(eq=False)
class SparseCholesky:
    L: sp.csc_matrix
    perm: np.ndarray
    _solver: Any = attrs.field(repr=False)

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def nnz(self) -> int:
        return self.L.nnz

    def solve(self, b: np.ndarray) -> np.ndarray:
        """A⁻¹b: forward substitution with L, then back substitution with Lᵀ (both permuted)."""
        if self.n == 0:
            return np.zeros_like(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, factor has {self.n}")
        return np.asarray(self._solver(np.ascontiguousarray(b, dtype=float)))


def _factorize_superlu(A: sp.csc_matrix, ordering: Ordering) -> SparseCholesky:
    try:
        lu = splu(
            A,
            permc_spec=_SUPERLU_ORDERING[ordering],
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as e:
        raise FactorizationError(f"sparse factorization failed: {e}") from e
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise FactorizationError("factorization pivoted off the diagonal; matrix is not positive definite")
    pivots = lu.U.diagonal()
    if not np.all(pivots > 0):
        k = int(np.argmin(pivots))
        raise FactorizationError(f"nonpositive pivot {pivots[k]:.3e} at position {k}")
    L = (lu.L @ sp.diags(np.sqrt(pivots))).tocsc()
    return SparseCholesky(L, np.argsort(lu.perm_c), lu.solve)


def _factorize_cholmod(A: sp.csc_matrix, ordering: Ordering) -> SparseCholesky:
    if cholmod is None:
        raise FactorizationError("the cholmod backend needs scikit-sparse (install the 'cholmod' extra)")
    try:
        factor = cholmod.cholesky(A, ordering_method=_CHOLMOD_ORDERING[ordering])
        L = factor.L().tocsc()
    except cholmod.CholmodError as e:
        raise FactorizationError(f"cholmod factorization failed: {e}") from e
    if not np.all(L.diagonal() > 0):
        raise FactorizationError("cholmod factor has a nonpositive diagonal")
    return SparseCholesky(L, np.asarray(factor.P()), factor)


def factorize(A: sp.spmatrix, ordering: Ordering = "amd", backend: Backend = "superlu") -> SparseCholesky:
    """Cholesky-factorize the symmetric positive definite matrix A."""
    A = sp.csc_matrix(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if ordering not in _SUPERLU_ORDERING:
        raise ValueError(f"unknown ordering {ordering!r}")
    if n == 0:
        return SparseCholesky(sp.csc_matrix((0, 0)), np.zeros(0, dtype=int), None)
    match backend:
        case "superlu":
            factor = _factorize_superlu(A, ordering)
        case "cholmod":
            factor = _factorize_cholmod(A, ordering)
        case _:
            raise ValueError(f"unknown factorization backend {backend!r}")
    logger.debug(f"{backend} factorization: n={n} nnz(A)={A.nnz} nnz(L)={factor.nnz} ordering={ordering}")
    return factor
