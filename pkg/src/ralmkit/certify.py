"""Second-order certificates and rate diagnostics.

Given a stationary pair, this module extracts an orthonormal basis of the
affine hull of the critical cone intersected with the tangent space,
certifies positive definiteness of the Lagrangian Hessian on it (the
strong second-order sufficient condition on the manifold), eigen-solves
the generalized augmented Hessian over the full tangent space, and fits
empirical linear rates to residual histories.

All eigensolves are dense and intended for desk-scale verification, not
production solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg

from . import geometry, lagrangian
from .geometry import ManifoldPoint, TangentVector
from .lagrangian import ProblemSpec

NULLSPACE_TOL = 1e-10
CERT_TOL = 1e-9
MAX_DENSE_DIM = 4000
ENUM_CAP = 12


class CertifyError(ValueError):
    pass


class StationarityError(CertifyError):
    """The pair is not complementarity-feasible; the critical cone is
    undefined there."""


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal tangent vectors spanning a subspace of T_X M."""

    point: ManifoldPoint
    vectors: Tuple[TangentVector, ...]

    @property
    def dim(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True)
class Certificate:
    kind: str
    min_eig: float
    subspace_dim: int
    boundary_count: int = 0
    elements_checked: int = 1
    partial: bool = False
    degenerate: bool = False
    tol: float = CERT_TOL

    @property
    def verdict(self) -> str:
        if self.degenerate:
            return "holds"
        return "holds" if self.min_eig > self.tol else "fails"

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"


def _stack(vectors: Sequence[TangentVector]) -> np.ndarray:
    return np.stack([v.ambient.ravel() for v in vectors])


def critical_cone_basis(
    P: ProblemSpec,
    X: ManifoldPoint,
    y: np.ndarray,
    tol: float = 1e-8,
) -> SubspaceBasis:
    """Orthonormal basis of aff(critical cone) intersected with T_X M.

    For the l1 term the affine hull fixes to zero every constraint-space
    entry where ``g(X)`` vanishes and the multiplier is strictly inside
    its box; tangent directions must satisfy those linear constraints
    under Dg(X).  Requires ``y`` to be a subgradient at ``g(X)`` up to
    ``tol``.
    """
    z = P.g_value(X.X)
    if not P.theta.in_subdifferential(z, y, tol=tol):
        raise StationarityError(
            "multiplier is not in the subdifferential at g(X); the critical cone is undefined"
        )
    mu = P.theta.mu
    constrained = (np.abs(z) <= tol) & (np.abs(y) < mu - tol)
    basis = X.manifold.tangent_basis(X)
    if not np.any(constrained):
        return SubspaceBasis(X, tuple(basis))

    rows = []
    for v in basis:
        rows.append(P.g_jvp(X.X, v.ambient)[constrained])
    C = np.stack(rows).T  # (n_constraints, tangent_dim)
    null = scipy.linalg.null_space(C, rcond=NULLSPACE_TOL)
    coeff_mat = _stack(basis)  # (tangent_dim, ambient_size)
    vectors = []
    for j in range(null.shape[1]):
        amb = (null[:, j] @ coeff_mat).reshape(X.manifold.ambient_shape)
        vectors.append(geometry.tangent_project(X, amb))
    return SubspaceBasis(X, tuple(vectors))


def _quadratic_form(apply_op, basis: Sequence[TangentVector]) -> np.ndarray:
    images = _stack([apply_op(v) for v in basis])
    B = _stack(basis) @ images.T
    return 0.5 * (B + B.T)


def mssosc_certificate(
    P: ProblemSpec,
    X: ManifoldPoint,
    y: np.ndarray,
    tol: float = CERT_TOL,
    cone_tol: float = 1e-8,
) -> Certificate:
    """Minimum eigenvalue of the Lagrangian Hessian on the critical-cone
    affine hull; positive means the second-order sufficient condition
    holds at ``(X, y)``."""
    basis = critical_cone_basis(P, X, y, tol=cone_tol)
    if basis.dim == 0:
        return Certificate("mssosc", math.inf, 0, degenerate=True, tol=tol)
    B = _quadratic_form(lambda v: lagrangian.lagrangian_hess_vec(P, X, y, v), basis.vectors)
    w = scipy.linalg.eigvalsh(B)
    return Certificate("mssosc", float(w[0]), basis.dim, tol=tol)


def genhess_min_eig(
    P: ProblemSpec,
    rho: float,
    X: ManifoldPoint,
    y: np.ndarray,
    enumerate_elements: bool = False,
    tol: float = CERT_TOL,
) -> Certificate:
    """Minimum eigenvalue of the generalized augmented Hessian on T_X M.

    With ``enumerate_elements`` and at most ``ENUM_CAP`` boundary entries
    of the prox, the minimum is taken over all extreme Clarke-Jacobian
    elements; otherwise only the convention element is used and the
    certificate is marked partial when boundaries were present.
    """
    if rho <= 0:
        raise CertifyError(f"penalty must be positive, got {rho}")
    basis = X.manifold.tangent_basis(X)
    if len(basis) > MAX_DENSE_DIM:
        raise CertifyError(
            f"tangent dimension {len(basis)} exceeds dense-assembly limit {MAX_DENSE_DIM}"
        )
    p = lagrangian.envelope_point(P, rho, X, y)
    base_jac = P.theta.prox_jacobian(1.0 / rho, p)
    b = base_jac.boundary_count
    partial = False
    if enumerate_elements and b <= ENUM_CAP:
        jacs = P.theta.extreme_prox_jacobians(1.0 / rho, p, cap=ENUM_CAP)
    else:
        jacs = [base_jac]
        partial = b > 0
    min_eig = math.inf
    for jac in jacs:
        B = _quadratic_form(
            lambda v: lagrangian.auglag_ghess_vec(P, rho, X, y, v, jac), basis
        )
        w = scipy.linalg.eigvalsh(B)
        min_eig = min(min_eig, float(w[0]))
    return Certificate(
        "generalized-hessian",
        min_eig,
        len(basis),
        boundary_count=b,
        elements_checked=len(jacs),
        partial=partial,
        tol=tol,
    )


def fit_linear_rate(residuals: Sequence[float], tail_fraction: float = 0.5) -> Tuple[float, float]:
    """Least-squares geometric rate of a positive residual sequence.

    Fits ``log r_k`` against ``k`` over the trailing ``tail_fraction`` of
    the sequence and returns ``(exp(slope), R^2)``.
    """
    r = np.asarray(residuals, dtype=float)
    if not 0 < tail_fraction <= 1:
        raise CertifyError("tail fraction must lie in (0, 1]")
    n_tail = max(int(math.ceil(len(r) * tail_fraction)), 5)
    tail = r[-n_tail:]
    if len(tail) < 5:
        raise CertifyError("need at least 5 tail residuals for a rate fit")
    if np.any(tail <= 0):
        raise CertifyError("residuals must be positive in the fitted tail")
    x = np.arange(len(tail), dtype=float)
    logr = np.log(tail)
    slope, intercept = np.polyfit(x, logr, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((logr - fitted) ** 2))
    ss_tot = float(np.sum((logr - logr.mean()) ** 2))
    quality = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return float(math.exp(slope)), float(quality)
