"""Prox toolkit for the outer convex term.

Ships the weighted l1 norm ``theta = mu * ||.||_1`` together with its
proximal map, Moreau envelope (in the ``rho``-parametrisation
``env(p) = min_u theta(u) + rho/2 ||p - u||^2``), envelope gradient,
Clarke generalized Jacobians of the prox, and a subgradient membership
test.  The interface is duck-typed so that other separable convex terms
can be added later.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List

import numpy as np

BOUNDARY_TOL = 1e-12


class ConvexError(ValueError):
    """Invalid prox-toolkit arguments (nonpositive parameter, bad shape)."""


@dataclass(frozen=True)
class ProxJacobian:
    """A B-subdifferential element of ``p -> prox(t, p)``.

    For the l1 norm this is a diagonal 0/1 mask: 1 wherever
    ``|p_ij| > t*mu``, 0 wherever ``|p_ij| < t*mu``.  ``boundary`` marks
    the tie entries ``|p_ij| = t*mu`` (within ``BOUNDARY_TOL``) where the
    recorded convention bit was applied.
    """

    mask: np.ndarray
    t: float
    boundary: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.mask * v

    @property
    def boundary_count(self) -> int:
        return int(np.count_nonzero(self.boundary))


class L1Norm:
    """theta(z) = mu * sum |z_ij| with mu > 0."""

    kind = "weighted-l1"

    def __init__(self, mu: float = 1.0):
        if mu <= 0:
            raise ConvexError(f"weight must be positive, got {mu}")
        self.mu = float(mu)

    def __repr__(self) -> str:
        return f"L1Norm(mu={self.mu})"

    def value(self, z: np.ndarray) -> float:
        return self.mu * float(np.sum(np.abs(z)))

    def prox(self, t: float, p: np.ndarray) -> np.ndarray:
        """Soft threshold at level ``t * mu``."""
        if t <= 0:
            raise ConvexError(f"prox parameter must be positive, got {t}")
        p = np.asarray(p, dtype=float)
        return np.sign(p) * np.maximum(np.abs(p) - t * self.mu, 0.0)

    def prox_jacobian(self, t: float, p: np.ndarray, boundary_value: int = 0) -> ProxJacobian:
        if t <= 0:
            raise ConvexError(f"prox parameter must be positive, got {t}")
        if boundary_value not in (0, 1):
            raise ConvexError("boundary convention bit must be 0 or 1")
        p = np.asarray(p, dtype=float)
        gap = np.abs(p) - t * self.mu
        boundary = np.abs(gap) <= BOUNDARY_TOL
        mask = (gap > 0).astype(float)
        if boundary_value == 1:
            mask[boundary] = 1.0
        else:
            mask[boundary] = 0.0
        return ProxJacobian(mask=mask, t=float(t), boundary=boundary)

    def extreme_prox_jacobians(self, t: float, p: np.ndarray, cap: int = 12) -> List[ProxJacobian]:
        """All extreme B-subdifferential elements of the prox at ``p``.

        One element per 0/1 assignment of the boundary entries, so the
        count is 2^b; refuses to enumerate past ``2**cap`` elements.
        """
        base = self.prox_jacobian(t, p, boundary_value=0)
        idx = np.argwhere(base.boundary)
        b = len(idx)
        if b > cap:
            raise ConvexError(f"{b} boundary entries exceed the enumeration cap of {cap}")
        out = []
        for bits in itertools.product((0.0, 1.0), repeat=b):
            mask = base.mask.copy()
            for bit, ij in zip(bits, idx):
                mask[tuple(ij)] = bit
            out.append(ProxJacobian(mask=mask, t=base.t, boundary=base.boundary))
        return out

    def moreau(self, rho: float, p: np.ndarray) -> float:
        if rho <= 0:
            raise ConvexError(f"envelope parameter must be positive, got {rho}")
        p = np.asarray(p, dtype=float)
        q = self.prox(1.0 / rho, p)
        return self.value(q) + 0.5 * rho * float(np.sum((p - q) ** 2))

    def moreau_grad(self, rho: float, p: np.ndarray) -> np.ndarray:
        if rho <= 0:
            raise ConvexError(f"envelope parameter must be positive, got {rho}")
        p = np.asarray(p, dtype=float)
        return rho * (p - self.prox(1.0 / rho, p))

    def in_subdifferential(self, z: np.ndarray, y: np.ndarray, tol: float = 1e-10) -> bool:
        """Whether ``y`` lies in the subdifferential of theta at ``z``."""
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        if z.shape != y.shape:
            raise ConvexError(f"shape mismatch: {z.shape} vs {y.shape}")
        if np.any(np.abs(y) > self.mu + tol):
            return False
        active = np.abs(z) > tol
        return bool(np.all(np.abs(y[active] - self.mu * np.sign(z[active])) <= tol))

    def conjugate_bound(self) -> float:
        """sup-norm radius of dom theta*; multipliers live in this box."""
        return self.mu


# ---------------------------------------------------------------------------
# Functional surface mirroring the operation names.

def prox(theta: L1Norm, t: float, p: np.ndarray) -> np.ndarray:
    return theta.prox(t, p)


def moreau_env(theta: L1Norm, rho: float, p: np.ndarray) -> float:
    return theta.moreau(rho, p)


def moreau_grad(theta: L1Norm, rho: float, p: np.ndarray) -> np.ndarray:
    return theta.moreau_grad(rho, p)


def prox_clarke_jac(theta: L1Norm, t: float, p: np.ndarray, boundary_value: int = 0) -> ProxJacobian:
    return theta.prox_jacobian(t, p, boundary_value=boundary_value)


def in_subdifferential(theta: L1Norm, z: np.ndarray, y: np.ndarray, tol: float = 1e-10) -> bool:
    return theta.in_subdifferential(z, y, tol=tol)
