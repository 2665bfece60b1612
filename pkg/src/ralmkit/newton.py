"""Globalized semismooth Newton solver for the augmented-Lagrangian
subproblem ``min_x l_rho(x, y)`` at fixed multiplier and penalty.

Each iteration solves the shifted generalized-Newton system

    (G_k + omega_k I) V = -grad l_rho(x_k, y),
    omega_k = |grad|^nu_bar,  residual tolerance min(eta_k, |grad|^(1+nu_bar)),

by conjugate gradients on the tangent space, falls back to the steepest
descent direction whenever the candidate fails the sufficient-descent
test, and globalizes with an Armijo backtracking line search along the
retraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import geometry, lagrangian
from .geometry import ManifoldPoint, RankDropError, TangentVector
from .lagrangian import ProblemSpec

log = logging.getLogger("ralmkit.newton")


class NewtonError(RuntimeError):
    pass


def _default_eta(k: int) -> float:
    return 1.0 / (k + 1.0) ** 2


@dataclass
class NewtonConfig:
    """Tunables of the inner solver; defaults follow common semismooth
    Newton practice where only parameter ranges are prescribed."""

    nu_bar: float = 1.0
    eta: Callable[[int], float] = _default_eta
    mu_ls: float = 1e-4
    delta: float = 0.5
    beta0: float = 1e-6
    beta1: float = 1e-6
    p: float = 2.0
    m_max: int = 40
    cg_max_iter: int = 500
    grad_tol: float = 1e-12
    max_iter: int = 200
    keep_points: bool = False

    def __post_init__(self):
        if not 0 < self.nu_bar <= 1:
            raise ValueError("nu_bar must lie in (0, 1]")
        if not 0 < self.mu_ls < 0.5:
            raise ValueError("line-search parameter must lie in (0, 1/2)")
        if not 0 < self.delta < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        # beta0 <= 1 makes the steepest-descent fallback always pass the
        # sufficient-descent test.
        if not 0 < self.beta0 <= 1 or self.beta1 <= 0 or self.p <= 0:
            raise ValueError("need 0 < beta0 <= 1, beta1 > 0, p > 0")
        if self.m_max < 1 or self.max_iter < 0 or self.cg_max_iter < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class CgInfo:
    iterations: int = 0
    converged: bool = False
    indefinite: bool = False
    residual_norm: float = float("inf")


@dataclass
class NewtonStats:
    iterations: int = 0
    cg_iterations: int = 0
    fallbacks: int = 0
    rank_drop_retries: int = 0
    line_search_failed: bool = False
    stopped: bool = False
    final_grad_norm: float = float("nan")
    objective_trace: List[float] = field(default_factory=list)
    points: List[ManifoldPoint] = field(default_factory=list)


def cg_solve(
    apply_H: Callable[[TangentVector], TangentVector],
    omega: float,
    b: TangentVector,
    tol: float,
    max_iter: int,
) -> tuple:
    """Conjugate gradients for ``(H + omega I) v = b`` on a tangent space.

    ``apply_H`` must be self-adjoint.  Exits early with the current
    iterate flagged when nonpositive curvature is detected.
    """
    if omega < 0:
        raise ValueError("shift must be nonnegative")
    info = CgInfo()
    x = 0.0 * b
    bnorm = b.norm()
    if bnorm == 0.0:
        info.converged = True
        info.residual_norm = 0.0
        return x, info
    r = b
    d = r
    rr = geometry.inner(r, r)
    for it in range(max_iter):
        Hd = apply_H(d) + omega * d
        if not np.all(np.isfinite(Hd.ambient)):
            raise NewtonError("operator returned non-finite values")
        dHd = geometry.inner(d, Hd)
        dd = geometry.inner(d, d)
        if dHd <= 1e-14 * dd:
            info.indefinite = True
            info.residual_norm = math.sqrt(rr)
            info.iterations = it
            return x, info
        alpha = rr / dHd
        x = x + alpha * d
        r = r - alpha * Hd
        rr_new = geometry.inner(r, r)
        info.iterations = it + 1
        if math.sqrt(rr_new) <= tol:
            info.converged = True
            info.residual_norm = math.sqrt(rr_new)
            return x, info
        d = r + (rr_new / rr) * d
        rr = rr_new
    info.residual_norm = math.sqrt(rr)
    return x, info


def ssn_minimize(
    P: ProblemSpec,
    rho: float,
    y: np.ndarray,
    X0: ManifoldPoint,
    cfg: Optional[NewtonConfig] = None,
    stop: Optional[Callable[[ManifoldPoint, TangentVector], bool]] = None,
) -> tuple:
    """Run the globalized semismooth Newton iteration from ``X0``.

    ``stop(X, grad)`` is evaluated before every step; when omitted the
    solver stops at ``|grad| <= cfg.grad_tol``.  Returns the final point
    together with :class:`NewtonStats`.
    """
    cfg = cfg or NewtonConfig()
    stats = NewtonStats()
    X = X0
    val = lagrangian.auglag_value(P, rho, X, y)
    stats.objective_trace.append(val)
    if cfg.keep_points:
        stats.points.append(X)

    for k in range(cfg.max_iter):
        grad = lagrangian.auglag_rgrad(P, rho, X, y)
        gnorm = grad.norm()
        stats.final_grad_norm = gnorm
        if not math.isfinite(gnorm) or not math.isfinite(val):
            raise NewtonError(f"non-finite subproblem state at iteration {k}")
        if (stop is not None and stop(X, grad)) or gnorm <= cfg.grad_tol:
            stats.stopped = True
            return X, stats

        omega = gnorm ** cfg.nu_bar
        eta_cap = min(cfg.eta(k), gnorm ** (1.0 + cfg.nu_bar))
        jac = P.theta.prox_jacobian(1.0 / rho, lagrangian.envelope_point(P, rho, X, y))
        apply_H = lambda v: lagrangian.auglag_ghess_vec(P, rho, X, y, v, jac)
        V, cg = cg_solve(apply_H, omega, -1.0 * grad, eta_cap, cfg.cg_max_iter)
        stats.cg_iterations += cg.iterations

        vnorm = V.norm()
        descent = geometry.inner(-1.0 * grad, V)
        if vnorm == 0.0 or descent < min(cfg.beta0, cfg.beta1 * vnorm ** cfg.p) * vnorm ** 2:
            V = -1.0 * grad
            stats.fallbacks += 1
            log.debug("iter %d: gradient fallback (cg indefinite=%s)", k, cg.indefinite)

        slope = geometry.inner(grad, V)
        accepted = False
        for m in range(cfg.m_max + 1):
            step = cfg.delta ** m
            try:
                X_new = geometry.retract(X, step * V)
            except RankDropError:
                stats.rank_drop_retries += 1
                continue
            val_new = lagrangian.auglag_value(P, rho, X_new, y)
            if val_new <= val + cfg.mu_ls * step * slope:
                accepted = True
                break
        if not accepted:
            stats.line_search_failed = True
            log.warning("iter %d: %d backtracks exhausted, returning best iterate", k, cfg.m_max)
            return X, stats

        X, val = X_new, val_new
        stats.iterations = k + 1
        stats.objective_trace.append(val)
        if cfg.keep_points:
            stats.points.append(X)

    grad = lagrangian.auglag_rgrad(P, rho, X, y)
    stats.final_grad_norm = grad.norm()
    stats.stopped = (stop is not None and stop(X, grad)) or stats.final_grad_norm <= cfg.grad_tol
    return X, stats
