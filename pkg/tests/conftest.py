import numpy as np
import pytest

from ralmkit.convex import L1Norm
from ralmkit.geometry import Euclidean
from ralmkit.lagrangian import ProblemSpec


def euclidean_l1_problem(shape=(1, 1), mu=1.0):
    """min theta(x) over a flat space: f = 0, g = identity."""
    man = Euclidean(*shape)
    return ProblemSpec(
        manifold=man,
        f_value=lambda X: 0.0,
        f_egrad=lambda X: np.zeros_like(X),
        f_ehess=lambda X, xi: np.zeros_like(xi),
        g_value=lambda X: X,
        g_jvp=lambda X, xi: xi,
        g_vjp=lambda X, w: w,
        gy_ehess=lambda X, y, xi: np.zeros_like(xi),
        theta=L1Norm(mu),
        name="euclidean-l1",
    )


def euclidean_quadratic_problem(Q, a, mu=1.0, g_zero=True):
    """min 0.5 (x-a)^T Q (x-a) [+ theta(x)] on a flat space.

    With ``g_zero`` the composite term is switched off (g maps to 0), so
    the problem is a plain smooth quadratic with minimizer ``a``.
    """
    Q = np.asarray(Q, float)
    a = np.asarray(a, float)
    man = Euclidean(*a.shape)

    def g_value(X):
        return np.zeros_like(X) if g_zero else X

    def g_jvp(X, xi):
        return np.zeros_like(xi) if g_zero else xi

    def g_vjp(X, w):
        return np.zeros_like(w) if g_zero else w

    return ProblemSpec(
        manifold=man,
        f_value=lambda X: 0.5 * float((X - a).ravel() @ Q @ (X - a).ravel()),
        f_egrad=lambda X: (Q @ (X - a).ravel()).reshape(a.shape),
        f_ehess=lambda X, xi: (Q @ xi.ravel()).reshape(a.shape),
        g_value=g_value,
        g_jvp=g_jvp,
        g_vjp=g_vjp,
        gy_ehess=lambda X, y, xi: np.zeros_like(xi),
        theta=L1Norm(mu),
        name="euclidean-quadratic",
    )


@pytest.fixture(scope="session")
def cm_pair():
    from ralmkit.bench import cm_analytic_pair

    return cm_analytic_pair(0.8)


@pytest.fixture(scope="session")
def rmc_fixture():
    from ralmkit.bench import rmc_toy_fixture

    return rmc_toy_fixture(seed=7)
