"""Geometry kernel for embedded matrix submanifolds.

Supports three geometries with the metric inherited from the ambient
Frobenius inner product:

* ``Euclidean(shape)`` -- a plain matrix space,
* ``Stiefel(n, r)``    -- n x r matrices with orthonormal columns,
* ``FixedRank(m, n, r)`` -- m x n matrices of exact rank r, stored in
  factored SVD form ``(U, s, V)`` with ``s`` positive and nonincreasing.

Points and tangent vectors are immutable values.  Tangent vectors carry
ambient coordinates; fixed-rank tangent vectors additionally carry the
factored coordinates ``(M, Up, Vp)`` with ``U^T Up = 0`` and ``V^T Vp = 0``.

Both retractions are second order: the polar retraction on Stiefel and the
metric-projection (truncated SVD) retraction on the fixed-rank manifold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

# Library-wide numerical constants.  Overridable per call where it matters.
ORTHO_TOL = 1e-12
TANGENT_TOL = 1e-10
RANK_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid geometric data (shape mismatch, invariant violation)."""


class RankDropError(GeometryError):
    """The point to retract has numerical rank below r.

    Signals that a step left the fixed-rank chart; the caller should
    shrink the step and retry.
    """


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ManifoldPoint:
    """A point on a manifold in its canonical representation.

    ``X`` is the ambient matrix.  For fixed-rank points ``factors`` holds
    the SVD triple ``(U, s, V)`` and ``X`` is the reconstruction
    ``U @ diag(s) @ V.T``.
    """

    manifold: "Manifold"
    X: np.ndarray
    factors: Optional[tuple] = None

    @property
    def shape(self) -> tuple:
        return self.X.shape


@dataclass(frozen=True)
class TangentVector:
    """An element of T_X M in ambient coordinates.

    Fixed-rank tangent vectors also carry ``factors = (M, Up, Vp)`` such
    that ``ambient = U M V^T + Up V^T + U Vp^T``.
    """

    point: ManifoldPoint
    ambient: np.ndarray
    factors: Optional[tuple] = None

    def __add__(self, other: "TangentVector") -> "TangentVector":
        _check_same_base(self, other)
        fac = None
        if self.factors is not None and other.factors is not None:
            fac = tuple(a + b for a, b in zip(self.factors, other.factors))
        return TangentVector(self.point, _readonly(self.ambient + other.ambient), fac)

    def __sub__(self, other: "TangentVector") -> "TangentVector":
        return self + (-1.0) * other

    def __neg__(self) -> "TangentVector":
        return (-1.0) * self

    def __rmul__(self, c: float) -> "TangentVector":
        fac = None
        if self.factors is not None:
            fac = tuple(c * a for a in self.factors)
        return TangentVector(self.point, _readonly(c * self.ambient), fac)

    def norm(self) -> float:
        return float(np.linalg.norm(self.ambient))


def _check_same_base(a: TangentVector, b: TangentVector) -> None:
    if a.point is b.point:
        return
    if a.point.manifold is not b.point.manifold or not np.allclose(
        a.point.X, b.point.X, atol=1e-12, rtol=0.0
    ):
        raise GeometryError("tangent vectors have mismatched base points")


class Manifold:
    """Base class; concrete geometries implement the projection, the
    retraction and the Euclidean-to-Riemannian Hessian conversion."""

    name = "manifold"
    ambient_shape: tuple

    def dim(self) -> int:
        raise NotImplementedError

    def check_point(self, point: ManifoldPoint) -> None:
        raise NotImplementedError

    def project(self, point: ManifoldPoint, Y: np.ndarray) -> TangentVector:
        raise NotImplementedError

    def retract(self, point: ManifoldPoint, xi: TangentVector) -> ManifoldPoint:
        raise NotImplementedError

    def ehess2rhess(
        self,
        point: ManifoldPoint,
        egrad: np.ndarray,
        ehess_vec: np.ndarray,
        xi: TangentVector,
    ) -> TangentVector:
        raise NotImplementedError

    def tangent_basis(self, point: ManifoldPoint) -> list:
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator) -> ManifoldPoint:
        raise NotImplementedError

    def zero_tangent(self, point: ManifoldPoint) -> TangentVector:
        return self.project(point, np.zeros(self.ambient_shape))

    def _check_ambient(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if Y.shape != self.ambient_shape:
            raise GeometryError(
                f"expected ambient shape {self.ambient_shape}, got {Y.shape}"
            )
        return Y


class Euclidean(Manifold):
    """A flat matrix space; every operation is the identity it should be."""

    name = "euclidean"

    def __init__(self, *shape: int):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        self.ambient_shape = tuple(int(s) for s in shape)

    def dim(self) -> int:
        return int(np.prod(self.ambient_shape))

    def point(self, X: np.ndarray) -> ManifoldPoint:
        return ManifoldPoint(self, _readonly(self._check_ambient(X)))

    def check_point(self, point: ManifoldPoint) -> None:
        self._check_ambient(point.X)

    def project(self, point: ManifoldPoint, Y: np.ndarray) -> TangentVector:
        return TangentVector(point, _readonly(self._check_ambient(Y)))

    def retract(self, point: ManifoldPoint, xi: TangentVector) -> ManifoldPoint:
        return self.point(point.X + xi.ambient)

    def ehess2rhess(self, point, egrad, ehess_vec, xi) -> TangentVector:
        return TangentVector(point, _readonly(self._check_ambient(ehess_vec)))

    def tangent_basis(self, point: ManifoldPoint) -> list:
        basis = []
        for idx in np.ndindex(*self.ambient_shape):
            E = np.zeros(self.ambient_shape)
            E[idx] = 1.0
            basis.append(TangentVector(point, _readonly(E)))
        return basis

    def random_point(self, rng: np.random.Generator) -> ManifoldPoint:
        return self.point(rng.standard_normal(self.ambient_shape))


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


class Stiefel(Manifold):
    """St(n, r): n x r matrices with orthonormal columns."""

    name = "stiefel"

    def __init__(self, n: int, r: int):
        if not 1 <= r <= n:
            raise GeometryError(f"need 1 <= r <= n, got n={n}, r={r}")
        self.n, self.r = int(n), int(r)
        self.ambient_shape = (self.n, self.r)

    def dim(self) -> int:
        return self.n * self.r - self.r * (self.r + 1) // 2

    def point(self, X: np.ndarray) -> ManifoldPoint:
        X = self._check_ambient(X)
        pt = ManifoldPoint(self, _readonly(X))
        self.check_point(pt)
        return pt

    def check_point(self, point: ManifoldPoint) -> None:
        G = point.X.T @ point.X - np.eye(self.r)
        err = np.max(np.abs(G))
        if err > ORTHO_TOL:
            raise GeometryError(f"columns not orthonormal: |X^T X - I|_inf = {err:.3e}")

    def project(self, point: ManifoldPoint, Y: np.ndarray) -> TangentVector:
        Y = self._check_ambient(Y)
        X = point.X
        return TangentVector(point, _readonly(Y - X @ _sym(X.T @ Y)))

    def retract(self, point: ManifoldPoint, xi: TangentVector) -> ManifoldPoint:
        # Polar factor of X + xi, computed by SVD for robustness.
        A = point.X + xi.ambient
        W, _, Zt = np.linalg.svd(A, full_matrices=False)
        return ManifoldPoint(self, _readonly(W @ Zt))

    def ehess2rhess(self, point, egrad, ehess_vec, xi) -> TangentVector:
        X = point.X
        corrected = self._check_ambient(ehess_vec) - xi.ambient @ _sym(X.T @ egrad)
        return self.project(point, corrected)

    def tangent_basis(self, point: ManifoldPoint) -> list:
        # xi = X A + X_perp B with A skew; both families are orthonormal in
        # the Frobenius metric because X and X_perp have orthonormal columns.
        X = point.X
        Xp = scipy.linalg.null_space(X.T)
        basis = []
        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        for i in range(self.r):
            for j in range(i + 1, self.r):
                A = np.zeros((self.r, self.r))
                A[i, j], A[j, i] = inv_sqrt2, -inv_sqrt2
                basis.append(TangentVector(point, _readonly(X @ A)))
        for a in range(self.n - self.r):
            for b in range(self.r):
                B = np.outer(Xp[:, a], np.eye(self.r)[b])
                basis.append(TangentVector(point, _readonly(B)))
        return basis

    def random_point(self, rng: np.random.Generator) -> ManifoldPoint:
        Q, _ = np.linalg.qr(rng.standard_normal((self.n, self.r)))
        return self.point(Q)


class FixedRank(Manifold):
    """Fr(m, n, r): m x n matrices of exact rank r in factored SVD form."""

    name = "fixed-rank"

    def __init__(self, m: int, n: int, r: int, rank_tol: float = RANK_TOL):
        if not 1 <= r <= min(m, n):
            raise GeometryError(f"need 1 <= r <= min(m, n), got {m}x{n}, r={r}")
        if rank_tol <= 0:
            raise GeometryError("rank threshold must be positive")
        self.m, self.n, self.r = int(m), int(n), int(r)
        self.rank_tol = float(rank_tol)
        self.ambient_shape = (self.m, self.n)

    def dim(self) -> int:
        return self.r * (self.m + self.n - self.r)

    def point_from_factors(self, U: np.ndarray, s: np.ndarray, V: np.ndarray) -> ManifoldPoint:
        U, V = np.asarray(U, float), np.asarray(V, float)
        s = np.asarray(s, float).ravel()
        if U.shape != (self.m, self.r) or V.shape != (self.n, self.r) or s.shape != (self.r,):
            raise GeometryError("factor shapes inconsistent with manifold")
        for F, lbl in ((U, "U"), (V, "V")):
            err = np.max(np.abs(F.T @ F - np.eye(self.r)))
            if err > ORTHO_TOL:
                raise GeometryError(f"{lbl} not orthonormal to tolerance ({err:.3e})")
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise GeometryError("singular values must be positive and nonincreasing")
        X = (U * s) @ V.T
        return ManifoldPoint(self, _readonly(X), factors=(_readonly(U), _readonly(s), _readonly(V)))

    def point_from_ambient(self, Z: np.ndarray, rank_tol: Optional[float] = None) -> ManifoldPoint:
        Z = self._check_ambient(Z)
        tol = self.rank_tol if rank_tol is None else rank_tol
        W, s, Vt = np.linalg.svd(Z, full_matrices=False)
        if s[self.r - 1] <= tol:
            raise RankDropError(
                f"sigma_{self.r} = {s[self.r - 1]:.3e} <= {tol:.1e}: rank below r"
            )
        return self.point_from_factors(W[:, : self.r], s[: self.r], Vt[: self.r].T)

    def check_point(self, point: ManifoldPoint) -> None:
        if point.factors is None:
            raise GeometryError("fixed-rank point must carry (U, s, V) factors")
        U, s, V = point.factors
        self.point_from_factors(U, s, V)

    def _tangent_from_factors(self, point, M, Up, Vp) -> TangentVector:
        U, _, V = point.factors
        amb = U @ M @ V.T + Up @ V.T + U @ Vp.T
        return TangentVector(point, _readonly(amb), factors=(_readonly(M), _readonly(Up), _readonly(Vp)))

    def project(self, point: ManifoldPoint, Y: np.ndarray) -> TangentVector:
        Y = self._check_ambient(Y)
        U, _, V = point.factors
        YV = Y @ V
        YtU = Y.T @ U
        M = U.T @ YV
        Up = YV - U @ M
        Vp = YtU - V @ M.T
        return self._tangent_from_factors(point, M, Up, Vp)

    def retract(self, point: ManifoldPoint, xi: TangentVector) -> ManifoldPoint:
        # Metric projection: rank-r truncated SVD of X + xi.
        return self.point_from_ambient(point.X + xi.ambient)

    def ehess2rhess(self, point, egrad, ehess_vec, xi) -> TangentVector:
        # Projected Euclidean Hessian plus the sigma-weighted curvature terms;
        # the correction only sees the normal component of the gradient.
        U, s, V = point.factors
        if s[-1] <= self.rank_tol:
            raise GeometryError("singular values below tolerance: curvature term ill-conditioned")
        egrad = self._check_ambient(egrad)
        ehess_vec = self._check_ambient(ehess_vec)
        N = egrad - U @ (U.T @ egrad)
        N = N - (N @ V) @ V.T  # N = P_U^perp egrad P_V^perp
        base = self.project(point, ehess_vec)
        M0, Up0, Vp0 = base.factors
        Up_c = (N @ (xi.ambient.T @ U)) / s
        Vp_c = (N.T @ (xi.ambient @ V)) / s
        return self._tangent_from_factors(point, M0, Up0 + Up_c, Vp0 + Vp_c)

    def tangent_basis(self, point: ManifoldPoint) -> list:
        U, _, V = point.factors
        Upx = scipy.linalg.null_space(U.T)
        Vpx = scipy.linalg.null_space(V.T)
        basis = []
        Z_M = np.zeros((self.r, self.r))
        Z_U = np.zeros((self.m, self.r))
        Z_V = np.zeros((self.n, self.r))
        for i in range(self.r):
            for j in range(self.r):
                M = Z_M.copy()
                M[i, j] = 1.0
                basis.append(self._tangent_from_factors(point, M, Z_U, Z_V))
        for a in range(self.m - self.r):
            for j in range(self.r):
                Up = np.outer(Upx[:, a], np.eye(self.r)[j])
                basis.append(self._tangent_from_factors(point, Z_M, Up, Z_V))
        for a in range(self.n - self.r):
            for j in range(self.r):
                Vp = np.outer(Vpx[:, a], np.eye(self.r)[j])
                basis.append(self._tangent_from_factors(point, Z_M, Z_U, Vp))
        return basis

    def random_point(self, rng: np.random.Generator) -> ManifoldPoint:
        U, _ = np.linalg.qr(rng.standard_normal((self.m, self.r)))
        V, _ = np.linalg.qr(rng.standard_normal((self.n, self.r)))
        s = np.sort(rng.uniform(0.5, 2.0, self.r))[::-1]
        return self.point_from_factors(U, s, V)


# ---------------------------------------------------------------------------
# Functional surface.

def tangent_project(point: ManifoldPoint, Y: np.ndarray) -> TangentVector:
    """Orthogonal projection of an ambient matrix onto T_X M."""
    return point.manifold.project(point, Y)


def retract(point: ManifoldPoint, xi: TangentVector) -> ManifoldPoint:
    """Second-order retraction of the tangent vector ``xi`` based at ``point``."""
    _require_base(point, xi)
    return point.manifold.retract(point, xi)


def riem_grad(point: ManifoldPoint, egrad: np.ndarray) -> TangentVector:
    """Riemannian gradient from the Euclidean gradient (projection)."""
    return point.manifold.project(point, egrad)


def riem_hess_vec(
    point: ManifoldPoint,
    egrad: np.ndarray,
    ehess_vec: np.ndarray,
    xi: TangentVector,
) -> TangentVector:
    """Riemannian Hessian-vector product from Euclidean derivatives.

    ``ehess_vec`` must be the Euclidean Hessian of the function applied to
    the ambient coordinates of ``xi``.
    """
    _require_base(point, xi)
    return point.manifold.ehess2rhess(point, egrad, ehess_vec, xi)


def inner(xi1: TangentVector, xi2: TangentVector) -> float:
    """Frobenius inner product of two tangent vectors at a common base."""
    _check_same_base(xi1, xi2)
    return float(np.vdot(xi1.ambient, xi2.ambient))


def norm(xi: TangentVector) -> float:
    return xi.norm()


def random_tangent(point: ManifoldPoint, seed: int) -> TangentVector:
    """Unit-norm tangent vector at ``point``, deterministic per seed."""
    rng = np.random.default_rng(seed)
    for _ in range(16):
        G = rng.standard_normal(point.manifold.ambient_shape)
        xi = point.manifold.project(point, G)
        nrm = xi.norm()
        if nrm > 1e-12:
            return (1.0 / nrm) * xi
    raise GeometryError("failed to draw a nonzero tangent vector")


def _require_base(point: ManifoldPoint, xi: TangentVector) -> None:
    if xi.point is point:
        return
    if xi.point.manifold is not point.manifold or not np.allclose(
        xi.point.X, point.X, atol=1e-12, rtol=0.0
    ):
        raise GeometryError("tangent vector is not based at the given point")
