"""
Product manifold SO(d)^a × S^{d-1}^b × ℝ^{c×d} over the rows of X.

Rows are laid out like a VariableLayout: a rotation blocks of d rows, then
b unit-vector rows, then c Euclidean rows. Every block uses the Frobenius
metric of the embedding. Operations are vectorized over blocks of a kind.
"""
from __future__ import annotations

from logging import getLogger

import attrs
import numpy as np

from .errors import DimensionError, ManifoldError
from .model import VariableLayout

logger = getLogger(__name__)

ROTATION_TOL = 1e-10
SPHERE_TOL = 1e-12


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _qr_positive(A: np.ndarray) -> np.ndarray:
    """Q factor of a stack of square matrices with diag(R) made positive."""
    Q, R = np.linalg.qr(A)
    s = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    s[s == 0] = 1.0
    return Q * s[..., None, :]


@attrs.frozen
class ProductManifold:
    d: int
    n_rotations: int
    n_unit_vectors: int
    n_euclidean: int = 0

    @classmethod
    def from_layout(cls, layout: VariableLayout, include_unconstrained: bool = False) -> ProductManifold:
        return cls(layout.d, layout.n_rotations, layout.n_unit_vectors, layout.n_f if include_unconstrained else 0)

    @property
    def rotation_rows(self) -> slice:
        return slice(0, self.d * self.n_rotations)

    @property
    def unit_vector_rows(self) -> slice:
        start = self.d * self.n_rotations
        return slice(start, start + self.n_unit_vectors)

    @property
    def euclidean_rows(self) -> slice:
        return slice(self.unit_vector_rows.stop, self.total_rows)

    @property
    def n_constrained_rows(self) -> int:
        return self.unit_vector_rows.stop

    @property
    def total_rows(self) -> int:
        return self.d * self.n_rotations + self.n_unit_vectors + self.n_euclidean

    @property
    def shape(self) -> tuple[int, int]:
        return self.total_rows, self.d

    @property
    def dim(self) -> int:
        d = self.d
        return self.n_rotations * d * (d - 1) // 2 + self.n_unit_vectors * (d - 1) + self.n_euclidean * d

    def _rotations(self, X: np.ndarray) -> np.ndarray:
        return X[self.rotation_rows].reshape(self.n_rotations, self.d, self.d)

    def _check_shape(self, X: np.ndarray) -> None:
        if X.shape != self.shape:
            raise DimensionError(f"expected a {self.total_rows}x{self.d} matrix, got shape {X.shape}")

    def check_point(self, X: np.ndarray) -> None:
        self._check_shape(X)
        Z = self._rotations(X)
        if self.n_rotations:
            err = np.abs(Z @ np.swapaxes(Z, 1, 2) - np.eye(self.d)).max()
            if err > ROTATION_TOL:
                raise ManifoldError(f"rotation block violates orthogonality by {err:.3e}")
            dets = np.linalg.det(Z)
            if np.any(dets <= 0):
                raise ManifoldError(f"rotation block {int(np.argmin(dets))} has determinant {dets.min():.3f}")
        if self.n_unit_vectors:
            err = np.abs(np.linalg.norm(X[self.unit_vector_rows], axis=1) - 1.0).max()
            if err > SPHERE_TOL:
                raise ManifoldError(f"unit-vector row violates the unit norm by {err:.3e}")

    def inner(self, X: np.ndarray, U: np.ndarray, V: np.ndarray) -> float:
        return float(np.sum(U * V))

    def norm(self, X: np.ndarray, V: np.ndarray) -> float:
        return float(np.linalg.norm(V))

    def zero_vector(self, X: np.ndarray) -> np.ndarray:
        return np.zeros(self.shape)

    def project_tangent(self, X: np.ndarray, V: np.ndarray) -> np.ndarray:
        if __debug__:
            self.check_point(X)
        if V.shape != self.shape:
            raise DimensionError(f"expected a {self.total_rows}x{self.d} matrix, got shape {V.shape}")
        out = np.array(V, dtype=float)
        if self.n_rotations:
            Z = self._rotations(X)
            W = self._rotations(out)
            W -= Z @ sym(np.swapaxes(Z, 1, 2) @ W)
        if self.n_unit_vectors:
            rows = self.unit_vector_rows
            x, v = X[rows], out[rows]
            v -= np.sum(v * x, axis=1, keepdims=True) * x
        return out

    def retract(self, X: np.ndarray, V: np.ndarray) -> np.ndarray:
        """QR retraction on rotations, normalization on spheres; blocks with V = 0 are returned unchanged."""
        if __debug__:
            self.check_point(X)
        if V.shape != self.shape:
            raise DimensionError(f"expected a {self.total_rows}x{self.d} matrix, got shape {V.shape}")
        Y = X + V
        if self.n_rotations:
            Zv = self._rotations(V)
            moved = np.any(Zv != 0, axis=(1, 2))
            if moved.any():
                Zy = self._rotations(Y)
                Zy[moved] = _qr_positive(Zy[moved])
                Zy[~moved] = self._rotations(X)[~moved]
            else:
                Y[self.rotation_rows] = X[self.rotation_rows]
        if self.n_unit_vectors:
            rows = self.unit_vector_rows
            moved = np.any(V[rows] != 0, axis=1)
            y = Y[rows]
            y[moved] /= np.linalg.norm(y[moved], axis=1, keepdims=True)
            y[~moved] = X[rows][~moved]
        return Y

    def egrad2rgrad(self, X: np.ndarray, G: np.ndarray) -> np.ndarray:
        return self.project_tangent(X, G)

    def ehess2rhess(self, X: np.ndarray, G: np.ndarray, H: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Riemannian Hessian-vector product from the Euclidean gradient G and Hessian-vector H."""
        out = np.array(H, dtype=float)
        if self.n_rotations:
            Z, Gz, Vz = self._rotations(X), self._rotations(G), self._rotations(V)
            self._rotations(out)[...] -= Vz @ sym(np.swapaxes(Z, 1, 2) @ Gz)
        if self.n_unit_vectors:
            rows = self.unit_vector_rows
            out[rows] -= np.sum(X[rows] * G[rows], axis=1, keepdims=True) * V[rows]
        return self.project_tangent(X, out)

    def random_point(self, seed: int | np.random.Generator | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        X = np.empty(self.shape)
        if self.n_rotations:
            Q = _qr_positive(rng.standard_normal((self.n_rotations, self.d, self.d)))
            flip = np.linalg.det(Q) < 0
            Q[flip, :, 0] *= -1.0
            X[self.rotation_rows] = Q.reshape(-1, self.d)
        if self.n_unit_vectors:
            u = rng.standard_normal((self.n_unit_vectors, self.d))
            X[self.unit_vector_rows] = u / np.linalg.norm(u, axis=1, keepdims=True)
        if self.n_euclidean:
            X[self.euclidean_rows] = rng.standard_normal((self.n_euclidean, self.d))
        return X

    def random_tangent(self, X: np.ndarray, seed: int | np.random.Generator | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        V = self.project_tangent(X, rng.standard_normal(self.shape))
        norm = np.linalg.norm(V)
        return V / norm if norm > 0 else V
