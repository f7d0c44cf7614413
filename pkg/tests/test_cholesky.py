"""
Tests for the sparse Cholesky wrapper.
"""
import numpy as np
import pytest
import scipy.sparse as sp

from schur_varpro import cholesky
from schur_varpro.cholesky import factorize
from schur_varpro.errors import FactorizationError


def random_spd(n: int, seed: int = 0) -> sp.csc_matrix:
    rng = np.random.default_rng(seed)
    M = sp.random(n, n, density=0.2, random_state=seed, format="csc")
    A = M @ M.T + sp.diags(rng.uniform(1.0, 2.0, n))
    return sp.csc_matrix(0.5 * (A + A.T))


class TestFactorize:

    @pytest.mark.parametrize("ordering", ["amd", "colamd", "natural"])
    def test_permuted_factor(self, ordering):
        """A[perm][:, perm] = L Lᵀ with L lower triangular."""
        A = random_spd(30, seed=1)
        f = factorize(A, ordering=ordering)
        L = f.L.toarray()
        np.testing.assert_allclose(np.triu(L, 1), 0.0)
        np.testing.assert_allclose(L @ L.T, A.toarray()[np.ix_(f.perm, f.perm)], atol=1e-10)

    def test_solve(self):
        A = random_spd(25, seed=2)
        b = np.random.default_rng(3).standard_normal((25, 3))
        x = factorize(A).solve(b)
        np.testing.assert_allclose(A @ x, b, atol=1e-10)

    def test_solve_vector(self):
        A = random_spd(10, seed=4)
        b = np.arange(10.0)
        np.testing.assert_allclose(A @ factorize(A).solve(b), b, atol=1e-10)

    def test_indefinite_rejected(self):
        with pytest.raises(FactorizationError):
            factorize(sp.diags([1.0, -1.0, 2.0]))

    def test_singular_rejected(self):
        with pytest.raises(FactorizationError):
            factorize(sp.csc_matrix((3, 3)))

    def test_empty(self):
        f = factorize(sp.csc_matrix((0, 0)))
        assert f.n == 0
        assert f.solve(np.zeros((0, 2))).shape == (0, 2)

    def test_wrong_rhs(self):
        with pytest.raises(ValueError):
            factorize(random_spd(5)).solve(np.zeros(4))

    def test_unknown_options(self):
        with pytest.raises(ValueError):
            factorize(random_spd(5), ordering="metis")
        with pytest.raises(ValueError):
            factorize(random_spd(5), backend="dense")

    def test_cholmod_backend(self):
        """Optional backend: same solution when installed, FactorizationError otherwise."""
        A = random_spd(20, seed=5)
        if cholesky.cholmod is None:
            with pytest.raises(FactorizationError, match="scikit-sparse"):
                factorize(A, backend="cholmod")
            return
        b = np.ones(20)
        np.testing.assert_allclose(factorize(A, backend="cholmod").solve(b), factorize(A).solve(b), rtol=1e-10)
