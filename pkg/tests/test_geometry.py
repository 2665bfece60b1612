import numpy as np
import pytest

from ralmkit import geometry, oracles
from ralmkit.geometry import (
    Euclidean,
    FixedRank,
    GeometryError,
    RankDropError,
    Stiefel,
    inner,
    norm,
    random_tangent,
    retract,
    riem_grad,
    riem_hess_vec,
    tangent_project,
)

MANIFOLDS = [Euclidean(3, 4), Stiefel(5, 2), Stiefel(4, 4), FixedRank(5, 4, 2)]


def curve_basis(X, n_curves=60, h=1e-6, seed=123):
    """Independent tangent-space oracle: differentiate manifold curves.

    Draws random ambient perturbations, maps them through the retraction
    (a curve on the manifold) and differentiates numerically; the span of
    the derivatives is the tangent space.
    """
    rng = np.random.default_rng(seed)
    man = X.manifold
    rows = []
    for _ in range(n_curves):
        Z = rng.standard_normal(man.ambient_shape)
        xi = man.project(X, Z)  # direction for the curve
        up = man.retract(X, h * xi).X
        dn = man.retract(X, (-h) * xi).X
        rows.append(((up - dn) / (2 * h)).ravel())
    A = np.stack(rows)
    # Orthonormal basis of the row span
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    return Vt[s > 1e-8 * s[0]]


def project_with_basis(B, Y):
    y = Y.ravel()
    return (B.T @ (B @ y)).reshape(Y.shape)


class TestTangentProject:
    def test_stiefel_closed_form(self):
        man = Stiefel(2, 1)
        X = man.point(np.array([[1.0], [0.0]]))
        out = tangent_project(X, np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(out.ambient, [[0.0], [4.0]], atol=1e-14)

    def test_fixed_rank_against_curve_oracle(self):
        man = FixedRank(2, 2, 1)
        e1 = np.array([[1.0], [0.0]])
        X = man.point_from_factors(e1, np.array([1.0]), e1)
        Y = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = tangent_project(X, Y)
        np.testing.assert_allclose(out.ambient, [[1.0, 2.0], [3.0, 0.0]], atol=1e-12)
        B = curve_basis(X)
        np.testing.assert_allclose(out.ambient, project_with_basis(B, Y), atol=1e-6)

    @pytest.mark.parametrize("man", MANIFOLDS, ids=lambda m: m.name + str(m.ambient_shape))
    def test_idempotent_and_self_adjoint(self, man):
        rng = np.random.default_rng(7)
        for _ in range(100):
            X = man.random_point(rng)
            Y = rng.standard_normal(man.ambient_shape)
            Z = rng.standard_normal(man.ambient_shape)
            PY = tangent_project(X, Y)
            PPY = tangent_project(X, PY.ambient)
            assert np.max(np.abs(PPY.ambient - PY.ambient)) <= 1e-10
            PZ = tangent_project(X, Z)
            lhs = np.vdot(PY.ambient, Z)
            rhs = np.vdot(Y, PZ.ambient)
            assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))

    @pytest.mark.parametrize("man", MANIFOLDS, ids=lambda m: m.name + str(m.ambient_shape))
    def test_matches_curve_oracle(self, man):
        rng = np.random.default_rng(3)
        X = man.random_point(rng)
        B = curve_basis(X)
        assert B.shape[0] == man.dim()
        Y = rng.standard_normal(man.ambient_shape)
        np.testing.assert_allclose(
            tangent_project(X, Y).ambient, project_with_basis(B, Y), atol=1e-6
        )

    def test_shape_mismatch(self):
        man = Stiefel(4, 2)
        X = man.random_point(np.random.default_rng(0))
        with pytest.raises(GeometryError):
            tangent_project(X, np.zeros((3, 3)))


class TestRetract:
    @pytest.mark.parametrize("man", MANIFOLDS, ids=lambda m: m.name + str(m.ambient_shape))
    def test_zero_tangent_is_identity(self, man):
        X = man.random_point(np.random.default_rng(5))
        X2 = retract(X, man.zero_tangent(X))
        assert np.max(np.abs(X2.X - X.X)) <= 1e-14

    def test_stiefel_polar_closed_form(self):
        # retraction of [0, t] at [1, 0] on the circle: [1, t]/sqrt(1+t^2)
        man = Stiefel(2, 1)
        X = man.point(np.array([[1.0], [0.0]]))
        for t in (0.3, -1.2, 5.0):
            xi = geometry.TangentVector(X, np.array([[0.0], [t]]))
            out = retract(X, xi)
            expect = np.array([[1.0], [t]]) / np.sqrt(1 + t * t)
            np.testing.assert_allclose(out.X, expect, atol=1e-14)

    def test_fixed_rank_svd_oracle(self):
        man = FixedRank(2, 2, 1)
        e1 = np.array([[1.0], [0.0]])
        X = man.point_from_factors(e1, np.array([1.0]), e1)
        eps = 0.25
        xi = tangent_project(X, eps * np.array([[0.0, 0.0], [1.0, 0.0]]))
        out = retract(X, xi)
        Z = X.X + xi.ambient
        W, s, Vt = np.linalg.svd(Z)
        expect = s[0] * np.outer(W[:, 0], Vt[0])
        np.testing.assert_allclose(out.X, expect, atol=1e-12)

    @pytest.mark.parametrize("man", MANIFOLDS, ids=lambda m: m.name + str(m.ambient_shape))
    def test_point_invariants_and_first_order(self, man):
        rng = np.random.default_rng(11)
        for trial in range(5):
            X = man.random_point(rng)
            xi = random_tangent(X, 50 + trial)
            Y = retract(X, xi)
            man.check_point(Y)
            # DR_x(0) = id via central differences
            h = 1e-6
            up = retract(X, h * xi).X
            dn = retract(X, (-h) * xi).X
            d = (up - dn) / (2 * h)
            rel = np.linalg.norm(d - xi.ambient) / np.linalg.norm(xi.ambient)
            assert rel <= 1e-6

    def test_rank_drop_raises(self):
        man = FixedRank(2, 2, 1)
        e1 = np.array([[1.0], [0.0]])
        X = man.point_from_factors(e1, np.array([1.0]), e1)
        # step straight to the rank-0 matrix
        xi = tangent_project(X, -X.X)
        with pytest.raises(RankDropError):
            retract(X, xi)


class TestGradientsAndHessians:
    @pytest.mark.parametrize("man", MANIFOLDS, ids=lambda m: m.name + str(m.ambient_shape))
    def test_riem_grad_finite_differences(self, man):
        rng = np.random.default_rng(21)
        A = rng.standard_normal(man.ambient_shape)

        def value(Z):
            return float(np.vdot(A, Z.X) + 0.5 * np.vdot(Z.X, Z.X))

        X = man.random_point(rng)
        grad = riem_grad(X, A + X.X)
        for trial in range(20):
            xi = random_tangent(X, 300 + trial)
            fd = oracles.directional_derivative(value, X, xi)
            exact = inner(grad, xi)
            assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))

    def test_egrad_already_tangent_unchanged(self):
        man = Stiefel(5, 2)
        X = man.random_point(np.random.default_rng(2))
        xi = random_tangent(X, 9)
        out = riem_grad(X, xi.ambient)
        np.testing.assert_allclose(out.ambient, xi.ambient, atol=1e-14)

    @pytest.mark.parametrize("man", MANIFOLDS, ids=lambda m: m.name + str(m.ambient_shape))
    def test_hessian_symmetry_and_linearity(self, man):
        rng = np.random.default_rng(31)
        A = rng.standard_normal(man.ambient_shape)
        Q = rng.standard_normal((A.size, A.size))
        Q = Q + Q.T

        def egrad(Z):
            return A + (Q @ Z.ravel()).reshape(A.shape)

        def ehess(Z, v):
            return (Q @ v.ravel()).reshape(A.shape)

        X = man.random_point(rng)
        g = egrad(X.X)
        zero = riem_hess_vec(X, g, ehess(X.X, np.zeros_like(g)), man.zero_tangent(X))
        assert norm(zero) <= 1e-14
        for trial in range(10):
            xi = random_tangent(X, 400 + trial)
            eta = random_tangent(X, 500 + trial)
            Hxi = riem_hess_vec(X, g, ehess(X.X, xi.ambient), xi)
            Heta = riem_hess_vec(X, g, ehess(X.X, eta.ambient), eta)
            assert abs(inner(eta, Hxi) - inner(xi, Heta)) <= 1e-10 * (1 + abs(inner(eta, Hxi)))

    @pytest.mark.parametrize("man", [Stiefel(5, 2), FixedRank(5, 4, 2)],
                             ids=lambda m: m.name)
    def test_second_order_taylor_slope(self, man):
        # cubic remainder of the quadratic model certifies second-order
        # retractions together with the Hessian formulas
        rng = np.random.default_rng(41)
        A = rng.standard_normal(man.ambient_shape)

        def value(Z):
            return float(np.vdot(A, Z.X) + 0.5 * np.vdot(Z.X, Z.X))

        for trial in range(3):
            X = man.random_point(rng)
            xi = random_tangent(X, 600 + trial)
            egrad = A + X.X
            grad = riem_grad(X, egrad)
            hv = lambda v: riem_hess_vec(X, egrad, v.ambient, v)
            slope = oracles.taylor_remainder_slope(value, grad, hv, X, xi)
            assert slope >= 2.7


class TestInnerNormRandom:
    def test_inner_norm_identities(self):
        man = Stiefel(6, 3)
        X = man.random_point(np.random.default_rng(1))
        a = random_tangent(X, 1)
        b = random_tangent(X, 2)
        assert abs(inner(a, a) - norm(a) ** 2) <= 1e-14
        assert abs(inner(a, b) - inner(b, a)) <= 1e-14

    @pytest.mark.parametrize("man", MANIFOLDS, ids=lambda m: m.name + str(m.ambient_shape))
    def test_random_tangent_unit_and_deterministic(self, man):
        X = man.random_point(np.random.default_rng(8))
        a = random_tangent(X, 77)
        b = random_tangent(X, 77)
        assert abs(norm(a) - 1.0) <= 1e-12
        np.testing.assert_array_equal(a.ambient, b.ambient)

    def test_mismatched_base_points(self):
        man = Stiefel(4, 2)
        rng = np.random.default_rng(3)
        X1, X2 = man.random_point(rng), man.random_point(rng)
        with pytest.raises(GeometryError):
            inner(random_tangent(X1, 0), random_tangent(X2, 0))


class TestStructuralInvariants:
    def test_stiefel_tangent_skew(self):
        man = Stiefel(6, 3)
        rng = np.random.default_rng(13)
        for trial in range(10):
            X = man.random_point(rng)
            xi = tangent_project(X, rng.standard_normal((6, 3)))
            S = X.X.T @ xi.ambient
            assert np.max(np.abs(S + S.T)) <= 1e-10

    def test_fixed_rank_factored_round_trip(self):
        man = FixedRank(6, 5, 3)
        rng = np.random.default_rng(17)
        for trial in range(10):
            X = man.random_point(rng)
            xi = tangent_project(X, rng.standard_normal((6, 5)))
            M, Up, Vp = xi.factors
            U, _, V = X.factors
            rebuilt = U @ M @ V.T + Up @ V.T + U @ Vp.T
            assert np.max(np.abs(rebuilt - xi.ambient)) <= 1e-10
            assert np.max(np.abs(U.T @ Up)) <= 1e-12
            assert np.max(np.abs(V.T @ Vp)) <= 1e-12

    def test_point_invariant_enforcement(self):
        with pytest.raises(GeometryError):
            Stiefel(3, 2).point(np.ones((3, 2)))
        man = FixedRank(3, 3, 2)
        with pytest.raises(GeometryError):
            man.point_from_factors(np.eye(3)[:, :2], np.array([1.0, 2.0]), np.eye(3)[:, :2])
