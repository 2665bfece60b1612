"""Finite-difference and Taylor-order verification of derivatives.

These checks compare analytic Riemannian gradients and generalized
Hessian-vector products against central differences taken along
retraction curves.  The envelope term is only twice differentiable away
from the prox threshold, so sampling rejects draws where the active set
changes inside the differencing stencil.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Tuple

import numpy as np

from . import geometry, lagrangian
from .geometry import ManifoldPoint, TangentVector
from .lagrangian import ProblemSpec


def _rel_err(approx: float, exact: float, scale: float = 1.0) -> float:
    # The denominator floor ties the comparison to the gradient scale, so a
    # near-orthogonal draw does not divide rounding noise by almost zero.
    return abs(approx - exact) / max(abs(exact), scale * 1e-3, 1e-12)


def directional_derivative(
    value: Callable[[ManifoldPoint], float],
    X: ManifoldPoint,
    xi: TangentVector,
    h: float = 1e-6,
) -> float:
    """Central difference of ``t -> value(retract(X, t xi))`` at 0."""
    up = value(geometry.retract(X, h * xi))
    dn = value(geometry.retract(X, (-h) * xi))
    return (up - dn) / (2.0 * h)


def _stable_sample(
    P: ProblemSpec,
    rho: float,
    rng: np.random.Generator,
    h: float,
    max_tries: int = 50,
) -> Tuple[ManifoldPoint, np.ndarray, TangentVector]:
    """Draw (X, y, xi) whose prox active set is constant across the
    differencing stencil."""
    theta = P.theta
    for _ in range(max_tries):
        X = P.manifold.random_point(rng)
        y = theta.mu * rng.uniform(-1.0, 1.0, size=P.g_value(X.X).shape)
        xi = geometry.random_tangent(X, int(rng.integers(0, 2 ** 31)))
        masks = []
        ok = True
        for t in (-h, 0.0, h):
            Xt = geometry.retract(X, t * xi) if t else X
            p = lagrangian.envelope_point(P, rho, Xt, y)
            jac = theta.prox_jacobian(1.0 / rho, p)
            if jac.boundary_count:
                ok = False
                break
            masks.append(jac.mask)
        if ok and all(np.array_equal(masks[0], m) for m in masks[1:]):
            return X, y, xi
    raise RuntimeError("could not sample a kink-free configuration")


def gradient_check(
    P: ProblemSpec,
    samples: int = 20,
    seed: int = 0,
    rho: float = 1.0,
    h: float = 1e-6,
) -> float:
    """Max relative error of the augmented-Lagrangian gradient against
    central differences of its value along retraction curves."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        X, y, xi = _stable_sample(P, rho, rng, h)
        grad = lagrangian.auglag_rgrad(P, rho, X, y)
        exact = geometry.inner(grad, xi)
        approx = directional_derivative(lambda Z: lagrangian.auglag_value(P, rho, Z, y), X, xi, h)
        worst = max(worst, _rel_err(approx, exact, scale=max(grad.norm(), 1.0)))
    return worst


def hessian_check(
    P: ProblemSpec,
    samples: int = 20,
    seed: int = 0,
    rho: float = 1.0,
    h: float = 1e-5,
) -> float:
    """Max relative error of generalized Hessian-vector products against
    differenced gradients along retraction curves (kink-free samples)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        X, y, xi = _stable_sample(P, rho, rng, h)
        Hxi = lagrangian.auglag_ghess_vec(P, rho, X, y, xi)
        up = lagrangian.auglag_rgrad(P, rho, geometry.retract(X, h * xi), y).ambient
        dn = lagrangian.auglag_rgrad(P, rho, geometry.retract(X, (-h) * xi), y).ambient
        fd = geometry.tangent_project(X, (up - dn) / (2.0 * h))
        denom = max(Hxi.norm(), 1e-8)
        worst = max(worst, float((fd - Hxi).norm()) / denom)
    return worst


def taylor_remainder_slope(
    value: Callable[[ManifoldPoint], float],
    grad: TangentVector,
    hess_vec: Callable[[TangentVector], TangentVector],
    X: ManifoldPoint,
    xi: TangentVector,
    t_grid: Optional[np.ndarray] = None,
) -> float:
    """Log-log slope of the second-order Taylor remainder along a
    retraction curve.

    A slope of about 3 certifies that the retraction is second order and
    the Hessian model is exact at ``X``.
    """
    if t_grid is None:
        t_grid = np.logspace(-2.0, -3.5, 7)
    f0 = value(X)
    g = geometry.inner(grad, xi)
    H = geometry.inner(xi, hess_vec(xi))
    ts, rems = [], []
    for t in t_grid:
        model = f0 + t * g + 0.5 * t * t * H
        rem = abs(value(geometry.retract(X, t * xi)) - model)
        if rem > 1e-14:  # below this the remainder is rounding noise
            ts.append(math.log(t))
            rems.append(math.log(rem))
    if len(ts) < 4:
        return math.inf  # remainder vanished to rounding: better than cubic
    slope, _ = np.polyfit(ts, rems, 1)
    return float(slope)
