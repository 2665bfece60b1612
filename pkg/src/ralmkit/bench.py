"""Problem builders, analytic fixtures and file ingestion.

Two applications ship:

* sparse spectral modes: ``min tr(X^T H X) + mu |X|_1`` over orthonormal
  frames, with H a periodic second-difference Hamiltonian,
* robust low-rank completion: ``min |P_Omega(X - A)|_1`` over fixed-rank
  matrices.

Both come with small closed-form stationary pairs used by the test and
certification suites.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .convex import L1Norm
from .geometry import FixedRank, ManifoldPoint, Stiefel
from .lagrangian import ProblemSpec
from .ralm import IterateRecord


class BenchError(ValueError):
    pass


class ParseError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Sparse spectral modes on the Stiefel manifold.

@dataclass(frozen=True)
class CmInstance:
    n: int
    r: int
    mu: float
    length: float

    @property
    def H(self) -> np.ndarray:
        return cm_hamiltonian(self.n, self.length)


def cm_hamiltonian(n: int, length: float) -> np.ndarray:
    """Periodic three-point stencil for -(1/2) d^2/dx^2 on [0, length]."""
    if n < 3 or length <= 0:
        raise BenchError(f"need n >= 3 and length > 0, got n={n}, length={length}")
    h = length / n
    H = np.zeros((n, n))
    np.fill_diagonal(H, 1.0 / h ** 2)
    off = -0.5 / h ** 2
    for i in range(n):
        H[i, (i + 1) % n] += off
        H[i, (i - 1) % n] += off
    return H


def build_cm(n: int, r: int, mu: float, length: float) -> ProblemSpec:
    """Problem spec for ``min tr(X^T H X) + mu |X|_1`` on St(n, r)."""
    if not 1 <= r <= n:
        raise BenchError(f"need 1 <= r <= n, got n={n}, r={r}")
    if mu <= 0:
        raise BenchError(f"need mu > 0, got {mu}")
    H = cm_hamiltonian(n, length)
    manifold = Stiefel(n, r)
    return ProblemSpec(
        manifold=manifold,
        f_value=lambda X: float(np.sum(X * (H @ X))),
        f_egrad=lambda X: 2.0 * (H @ X),
        f_ehess=lambda X, xi: 2.0 * (H @ xi),
        g_value=lambda X: X,
        g_jvp=lambda X, xi: xi,
        g_vjp=lambda X, w: w,
        gy_ehess=lambda X, y, xi: np.zeros_like(xi),
        theta=L1Norm(mu),
        name=f"sparse-modes(n={n},r={r},mu={mu})",
    )


def cm_analytic_pair(mu: float = 0.8) -> Tuple[ProblemSpec, ManifoldPoint, np.ndarray]:
    """Closed-form stationary pair of the 4-node, 2-mode instance.

    Returns the problem (n=4, r=2, domain length 2), the stationary frame
    with two interleaved flat modes, and a certifying multiplier carried
    on the support of the frame.
    """
    P = build_cm(4, 2, mu, 2.0)
    a = math.sqrt(2.0) / 2.0
    X = np.array([[0.0, a], [0.0, a], [a, 0.0], [a, 0.0]])
    y = mu * np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
    return P, P.manifold.point(X), y


def cm_initial_point(n: int, r: int, seed: int) -> ManifoldPoint:
    """Column-orthonormalized Gaussian start, deterministic per seed."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return Stiefel(n, r).point(Q)


# ---------------------------------------------------------------------------
# Robust low-rank completion on the fixed-rank manifold.

@dataclass(frozen=True)
class RmcInstance:
    m: int
    n: int
    r: int
    A: np.ndarray
    omega: np.ndarray  # boolean observation mask
    mu: float = 1.0


def build_rmc(A: np.ndarray, omega: np.ndarray, r: int, mu: float = 1.0) -> ProblemSpec:
    """Problem spec for ``min mu |P_Omega(X - A)|_1`` on Fr(m, n, r)."""
    A = np.asarray(A, dtype=float)
    omega = np.asarray(omega, dtype=bool)
    if A.shape != omega.shape:
        raise BenchError(f"mask shape {omega.shape} does not match data {A.shape}")
    if not omega.any():
        raise BenchError("observation set is empty")
    m, n = A.shape
    if not 1 <= r <= min(m, n):
        raise BenchError(f"need 1 <= r <= min(m, n), got r={r}")
    mask = omega.astype(float)
    manifold = FixedRank(m, n, r)
    return ProblemSpec(
        manifold=manifold,
        f_value=lambda X: 0.0,
        f_egrad=lambda X: np.zeros_like(X),
        f_ehess=lambda X, xi: np.zeros_like(xi),
        g_value=lambda X: mask * (X - A),
        g_jvp=lambda X, xi: mask * xi,
        g_vjp=lambda X, w: mask * w,
        gy_ehess=lambda X, y, xi: np.zeros_like(xi),
        theta=L1Norm(mu),
        name=f"robust-completion({m}x{n},r={r})",
    )


@dataclass(frozen=True)
class RmcFixture:
    problem: ProblemSpec
    instance: RmcInstance
    A_exact: np.ndarray
    E_out: np.ndarray
    X_bar: ManifoldPoint
    y_bar: np.ndarray


def rmc_toy_fixture(seed: int = 7, magnitude: float = 0.5) -> RmcFixture:
    """Fully observed 5x5 rank-3 completion instance with outliers.

    The ground truth has zero rows and columns in positions 4 and 5, so
    the lower-right 2x2 block spans the normal space at it; outliers are
    planted there with magnitudes in ``[0.1, magnitude]``.  The returned
    multiplier is the subgradient sign pattern of the residual at the
    ground truth, which certifies it as a KKT point.
    """
    if not 0.1 <= magnitude <= 0.5:
        raise BenchError("outlier magnitude must lie in [0.1, 0.5]")
    s2 = math.sqrt(2.0) / 2.0
    U = np.array(
        [[1.0, 0.0, 0.0], [0.0, -s2, s2], [0.0, s2, s2], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    )
    V = np.array(
        [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.0, -0.8, 0.6], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    )
    S = np.diag([1.0, 2.0, 3.0])
    A_exact = U @ S @ V.T

    rng = np.random.default_rng(seed)
    block = rng.uniform(0.1, magnitude, size=(2, 2)) * rng.choice([-1.0, 1.0], size=(2, 2))
    E_out = np.zeros((5, 5))
    E_out[3:, 3:] = block
    A = A_exact + E_out
    omega = np.ones((5, 5), dtype=bool)

    problem = build_rmc(A, omega, r=3)
    instance = RmcInstance(5, 5, 3, A, omega)
    X_bar = problem.manifold.point_from_ambient(A_exact)
    # g(X_bar) = -E_out on the block, so the certifying sign is -sgn(E_out).
    y_bar = np.zeros((5, 5))
    y_bar[3:, 3:] = -np.sign(block)
    return RmcFixture(problem, instance, A_exact, E_out, X_bar, y_bar)


def rmc_random_outliers(
    m: int, n: int, density: float, magnitude: float, seed: int
) -> np.ndarray:
    """Sparse +/-magnitude outlier matrix at the given density."""
    if not 0 < density <= 1 or magnitude <= 0:
        raise BenchError("need density in (0, 1] and magnitude > 0")
    rng = np.random.default_rng(seed)
    E = np.zeros((m, n))
    hit = rng.uniform(size=(m, n)) < density
    E[hit] = magnitude * rng.choice([-1.0, 1.0], size=int(hit.sum()))
    return E


# ---------------------------------------------------------------------------
# File ingestion: CSV and Matrix Market coordinate format.

def save_dense(path: str, M: np.ndarray) -> None:
    """Write a dense matrix as CSV with 17 significant digits."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    payload = "\n".join(",".join(f"{v:.17g}" for v in row) for row in M) + "\n"
    atomic_write(path, payload)


def load_dense(path: str, fmt: str = "csv") -> np.ndarray:
    """Load a dense matrix from CSV or Matrix Market coordinate format."""
    if fmt == "csv":
        return _load_csv(path)
    if fmt in ("matrix-market", "mm"):
        M, _ = load_coordinate(path)
        return M
    raise ParseError(f"unknown format {fmt!r}; expected 'csv' or 'matrix-market'")


def _load_csv(path: str) -> np.ndarray:
    rows: List[List[float]] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if rows and len(values) != len(rows[0]):
                raise ParseError(
                    f"{path}: line {lineno}: expected {len(rows[0])} columns, got {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows)


def load_coordinate(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Read a Matrix Market coordinate file.

    Returns the dense matrix and the boolean mask of listed entries
    (which defines the observation set for completion problems).
    """
    with open(path) as fh:
        lines = fh.readlines()
    idx = 0
    if idx < len(lines) and lines[idx].startswith("%%MatrixMarket"):
        header = lines[idx].split()
        if len(header) < 4 or header[2] != "coordinate":
            raise ParseError(f"{path}: line 1: only coordinate format is supported")
        idx += 1
    while idx < len(lines) and lines[idx].lstrip().startswith("%"):
        idx += 1
    if idx >= len(lines):
        raise ParseError(f"{path}: missing size line")
    try:
        m, n, nnz = (int(tok) for tok in lines[idx].split())
    except ValueError:
        raise ParseError(f"{path}: line {idx + 1}: malformed size line") from None
    M = np.zeros((m, n))
    mask = np.zeros((m, n), dtype=bool)
    count = 0
    for lineno in range(idx + 1, len(lines)):
        line = lines[lineno].strip()
        if not line or line.startswith("%"):
            continue
        toks = line.split()
        if len(toks) != 3:
            raise ParseError(f"{path}: line {lineno + 1}: expected 'i j value'")
        try:
            i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno + 1}: {exc}") from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise ParseError(f"{path}: line {lineno + 1}: index ({i},{j}) out of range")
        M[i - 1, j - 1] = v
        mask[i - 1, j - 1] = True
        count += 1
    if count != nnz:
        raise ParseError(f"{path}: header promised {nnz} entries, found {count}")
    return M, mask


def save_log(path: str, records: Sequence[IterateRecord]) -> None:
    """Write iterate telemetry as CSV (atomically, stable schema)."""
    lines = [",".join(IterateRecord.FIELDS)]
    for rec in records:
        cells = []
        for name, v in zip(IterateRecord.FIELDS, rec.as_row()):
            if name in ("k", "inner_iters"):
                cells.append(str(int(v)))
            else:
                cells.append(f"{float(v):.17g}")
        lines.append(",".join(cells))
    atomic_write(path, "\n".join(lines) + "\n")


def load_log(path: str) -> List[IterateRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != IterateRecord.FIELDS:
            raise ParseError(f"{path}: unexpected log header {header}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(IterateRecord.FIELDS):
                raise ParseError(f"{path}: line {lineno}: wrong number of columns")
            try:
                records.append(
                    IterateRecord(
                        k=int(row[0]),
                        rho=float(row[1]),
                        rho_tilde=float(row[2]),
                        inner_iters=int(row[3]),
                        grad_norm=float(row[4]),
                        kkt_residual=float(row[5]),
                        dual_step_norm=float(row[6]),
                        auglag=float(row[7]),
                    )
                )
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
    return records


def atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
