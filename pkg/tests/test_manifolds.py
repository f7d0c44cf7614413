"""
Tests for the product manifold of rotations, unit vectors and Euclidean rows.
"""
import numpy as np
import pytest

from schur_varpro.errors import DimensionError, ManifoldError
from schur_varpro.manifolds import ProductManifold, sym


@pytest.fixture(params=[2, 3], ids=["d2", "d3"])
def manifold(request):
    return ProductManifold(request.param, n_rotations=3, n_unit_vectors=2, n_euclidean=2)


def quadratic(n: int, seed: int = 0):
    """f(X) = tr(XᵀMX) for a random symmetric M."""
    F = np.random.default_rng(seed).standard_normal((n, n))
    M = F + F.T
    return (lambda X: float(np.sum(X * (M @ X)))), (lambda X: 2.0 * M @ X), (lambda V: 2.0 * M @ V)


class TestPoints:

    def test_random_point_on_manifold(self, manifold):
        X = manifold.random_point(0)
        manifold.check_point(X)
        d = manifold.d
        for k in range(manifold.n_rotations):
            assert np.linalg.det(X[k * d : (k + 1) * d]) == pytest.approx(1.0)

    def test_random_point_deterministic(self, manifold):
        np.testing.assert_array_equal(manifold.random_point(5), manifold.random_point(5))

    def test_shape_and_dim(self):
        m = ProductManifold(3, 2, 1, 4)
        assert m.shape == (3 * 2 + 1 + 4, 3)
        assert m.n_constrained_rows == 7
        assert m.dim == 2 * 3 + 1 * 2 + 4 * 3

    def test_from_layout(self, grid_dataset):
        layout = grid_dataset.layout
        reduced = ProductManifold.from_layout(layout)
        full = ProductManifold.from_layout(layout, include_unconstrained=True)
        assert reduced.total_rows == layout.n_c
        assert full.total_rows == layout.n

    def test_check_point_rejects_reflection(self):
        m = ProductManifold(2, 1, 0)
        with pytest.raises(ManifoldError, match="determinant"):
            m.check_point(np.diag([1.0, -1.0]))

    def test_check_point_rejects_non_orthogonal(self):
        m = ProductManifold(2, 1, 0)
        with pytest.raises(ManifoldError, match="orthogonality"):
            m.check_point(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_check_point_rejects_non_unit(self):
        m = ProductManifold(3, 0, 1)
        with pytest.raises(ManifoldError, match="unit norm"):
            m.check_point(np.array([[1.0, 1.0, 0.0]]))

    def test_wrong_shape(self, manifold):
        with pytest.raises(DimensionError):
            manifold.check_point(np.zeros((1, manifold.d)))


class TestTangent:

    def test_projection_is_tangent(self, manifold):
        rng = np.random.default_rng(1)
        X = manifold.random_point(rng)
        V = manifold.project_tangent(X, rng.standard_normal(manifold.shape))
        d = manifold.d
        for k in range(manifold.n_rotations):
            Z, W = X[k * d : (k + 1) * d], V[k * d : (k + 1) * d]
            np.testing.assert_allclose(sym(Z.T @ W), 0.0, atol=1e-12)
        rows = manifold.unit_vector_rows
        np.testing.assert_allclose(np.sum(X[rows] * V[rows], axis=1), 0.0, atol=1e-12)

    def test_projection_idempotent(self, manifold):
        rng = np.random.default_rng(2)
        X = manifold.random_point(rng)
        V = manifold.project_tangent(X, rng.standard_normal(manifold.shape))
        np.testing.assert_allclose(manifold.project_tangent(X, V), V, atol=1e-12)

    def test_euclidean_rows_untouched(self, manifold):
        rng = np.random.default_rng(3)
        X = manifold.random_point(rng)
        G = rng.standard_normal(manifold.shape)
        np.testing.assert_array_equal(manifold.project_tangent(X, G)[manifold.euclidean_rows], G[manifold.euclidean_rows])

    def test_random_tangent_unit(self, manifold):
        X = manifold.random_point(4)
        V = manifold.random_tangent(X, 4)
        assert manifold.norm(X, V) == pytest.approx(1.0)
        np.testing.assert_allclose(manifold.project_tangent(X, V), V, atol=1e-12)

    def test_zero_vector(self, manifold):
        X = manifold.random_point(0)
        assert manifold.norm(X, manifold.zero_vector(X)) == 0.0


class TestRetraction:

    def test_stays_on_manifold(self, manifold):
        rng = np.random.default_rng(5)
        X = manifold.random_point(rng)
        V = 3.0 * manifold.random_tangent(X, rng)
        manifold.check_point(manifold.retract(X, V))

    def test_zero_step_exact(self, manifold):
        X = manifold.random_point(6)
        np.testing.assert_array_equal(manifold.retract(X, manifold.zero_vector(X)), X)

    def test_unmoved_blocks_exact(self):
        """Blocks with a zero step are returned bit for bit."""
        m = ProductManifold(3, 2, 2)
        rng = np.random.default_rng(7)
        X = m.random_point(rng)
        V = m.random_tangent(X, rng)
        V[:3] = 0.0
        V[6] = 0.0
        Y = m.retract(X, V)
        np.testing.assert_array_equal(Y[:3], X[:3])
        np.testing.assert_array_equal(Y[6], X[6])

    def test_second_order_agreement(self, manifold):
        """‖R(X, tV) - (X + tV)‖ shrinks by about 100 when t shrinks by 10."""
        rng = np.random.default_rng(8)
        X = manifold.random_point(rng)
        V = manifold.random_tangent(X, rng)
        errs = [np.linalg.norm(manifold.retract(X, t * V) - (X + t * V)) for t in (1e-3, 1e-4)]
        assert 30 <= errs[0] / errs[1] <= 300


class TestDerivatives:

    def test_riemannian_gradient(self, manifold):
        """⟨grad f, V⟩ matches a central difference along the retraction."""
        f, egrad, _ = quadratic(manifold.total_rows, seed=9)
        rng = np.random.default_rng(9)
        X = manifold.random_point(rng)
        V = manifold.random_tangent(X, rng)
        h = 1e-6
        fd = (f(manifold.retract(X, h * V)) - f(manifold.retract(X, -h * V))) / (2 * h)
        assert manifold.inner(X, manifold.egrad2rgrad(X, egrad(X)), V) == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_riemannian_hessian(self, manifold):
        """Hess f[V] matches a central difference of the Riemannian gradient, projected back."""
        f, egrad, ehess = quadratic(manifold.total_rows, seed=10)
        rng = np.random.default_rng(10)
        X = manifold.random_point(rng)
        V = manifold.random_tangent(X, rng)
        h = 1e-5
        g_plus = manifold.egrad2rgrad(manifold.retract(X, h * V), egrad(manifold.retract(X, h * V)))
        g_minus = manifold.egrad2rgrad(manifold.retract(X, -h * V), egrad(manifold.retract(X, -h * V)))
        fd = manifold.project_tangent(X, (g_plus - g_minus) / (2 * h))
        hess = manifold.ehess2rhess(X, egrad(X), ehess(V), V)
        assert np.linalg.norm(hess - fd) <= 1e-5 * max(np.linalg.norm(hess), 1.0)

    def test_hessian_symmetric(self, manifold):
        _, egrad, ehess = quadratic(manifold.total_rows, seed=11)
        rng = np.random.default_rng(11)
        X = manifold.random_point(rng)
        U, V = manifold.random_tangent(X, rng), manifold.random_tangent(X, rng)
        G = egrad(X)
        a = manifold.inner(X, manifold.ehess2rhess(X, G, ehess(U), U), V)
        b = manifold.inner(X, U, manifold.ehess2rhess(X, G, ehess(V), V))
        assert a == pytest.approx(b, rel=1e-10, abs=1e-10)
