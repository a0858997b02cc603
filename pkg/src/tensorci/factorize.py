"""Orthogonal factorizations and Tucker machinery.

Top-r left singular subspaces, deterministic QR, HOSVD/HOOI, the one-step
power-iteration refinement shared by both inference pipelines, and the
randomized test-signal construction used by the simulation harness.

Singular vectors are only identified up to rotation, so everything downstream
compares projectors U U^T; raw factor matrices are made deterministic by a
first-nonzero-entry-positive sign convention.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import matricize, mode_product, multi_mode_product
from .errors import DegenerateRankError, ShapeError
from .rng import make_rng

__all__ = [
    "TuckerFactors",
    "SpectralSummary",
    "top_left_singular",
    "qr_orthonormal",
    "hosvd",
    "power_iteration_step",
    "hooi",
    "HooiResult",
    "spectral_summary",
    "generate_signal",
]

_RANK_TOL = 1e-12
_GAP_WARN_RATIO = 1e-8


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor (r1 x r2 x r3) plus orthonormal factors U_j (p_j x r_j)."""

    core: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def ranks(self) -> tuple[int, int, int]:
        return self.core.shape

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(u.shape[0] for u in self.factors)

    def reconstruct(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)

    def projectors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(u @ u.T for u in self.factors)


@dataclass(frozen=True)
class SpectralSummary:
    lambda_min: float
    lambda_max: float

    @property
    def kappa(self) -> float:
        return self.lambda_max / self.lambda_min


def _fix_column_signs(u: np.ndarray) -> np.ndarray:
    """First (numerically) nonzero entry of each column made positive."""
    u = u.copy()
    for k in range(u.shape[1]):
        col = u[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300))
        if nz.size and col[nz[0]] < 0:
            u[:, k] = -col
    return u


def top_left_singular(m: np.ndarray, r: int) -> np.ndarray:
    """Leading-r left singular vectors, orthonormal columns, deterministic signs.

    For very wide matrices the subspace is taken from the eigendecomposition
    of m m^T, which avoids a bidiagonalization over the long dimension.
    """
    m = np.asarray(m, dtype=np.float64)
    rows, cols = m.shape
    if not 1 <= r <= min(rows, cols):
        raise ShapeError(f"rank {r} invalid for a {rows}x{cols} matrix")

    if cols >= 8 * rows:
        gram = m @ m.T
        evals, evecs = np.linalg.eigh(gram)
        svals = np.sqrt(np.clip(evals[::-1], 0.0, None))
        u = evecs[:, ::-1]
    else:
        u, svals, _ = np.linalg.svd(m, full_matrices=False)

    if svals[r - 1] <= _RANK_TOL * svals[0]:
        raise DegenerateRankError(
            f"sigma_{r} = {svals[r - 1]:.3e} is numerically zero relative to "
            f"sigma_1 = {svals[0]:.3e}"
        )
    if r < len(svals) and (svals[r - 1] - svals[r]) < _GAP_WARN_RATIO * svals[0]:
        warnings.warn(
            f"spectral gap at rank {r} is below {_GAP_WARN_RATIO} of sigma_1; "
            "the selected subspace is ill-determined",
            RuntimeWarning,
            stacklevel=2,
        )
    return _fix_column_signs(u[:, :r])


def qr_orthonormal(m: np.ndarray) -> np.ndarray:
    """Orthonormal basis of span(m) via QR with nonnegative-diagonal R."""
    m = np.asarray(m, dtype=np.float64)
    q, r = np.linalg.qr(m)
    diag = np.diag(r)
    scale = max(np.abs(diag).max(), np.abs(m).max(), 1e-300)
    if np.any(np.abs(diag) <= _RANK_TOL * scale):
        raise DegenerateRankError("input matrix is numerically rank-deficient")
    signs = np.sign(diag)
    return q * signs


def hosvd(y: np.ndarray, ranks: tuple[int, int, int]) -> TuckerFactors:
    """Higher-order SVD: per-mode top left singular subspaces plus core."""
    factors = tuple(top_left_singular(matricize(y, j + 1), ranks[j]) for j in range(3))
    core = multi_mode_product(y, [u.T for u in factors])
    return TuckerFactors(core=core, factors=factors)


def power_iteration_step(y, factors_in, ranks) -> tuple[np.ndarray, ...]:
    """One Jacobi-style power iteration: every mode is refined from the
    incoming factors, U_j <- top-r_j left singular vectors of
    Mat_j(y x_{j+1} U_{j+1}^T x_{j+2} U_{j+2}^T)."""
    out = []
    for j in range(3):
        u1 = factors_in[(j + 1) % 3]
        u2 = factors_in[(j + 2) % 3]
        contracted = mode_product(
            mode_product(y, u1.T, (j + 1) % 3 + 1), u2.T, (j + 2) % 3 + 1
        )
        out.append(top_left_singular(matricize(contracted, j + 1), ranks[j]))
    return tuple(out)


@dataclass(frozen=True)
class HooiResult:
    factors: TuckerFactors
    iterations: int
    converged: bool


def hooi(y, ranks, max_iters: int = 50, tol: float = 1e-10) -> HooiResult:
    """Higher-order orthogonal iteration from the HOSVD start.

    Stops when the largest per-mode projector change (Frobenius) drops below
    tol; tol=inf therefore returns the HOSVD factors unrefined.
    """
    current = hosvd(y, ranks).factors
    converged = False
    iterations = 0
    for k in range(max_iters):
        candidate = power_iteration_step(y, current, ranks)
        change = max(
            np.linalg.norm(c @ c.T - u @ u.T) for c, u in zip(candidate, current)
        )
        iterations = k + 1
        if change <= tol:
            converged = True
            break
        current = candidate
    core = multi_mode_product(y, [u.T for u in current])
    return HooiResult(TuckerFactors(core=core, factors=current), iterations, converged)


def spectral_summary(t: np.ndarray, ranks: tuple[int, int, int]) -> SpectralSummary:
    """lambda_min = min_j sigma_{r_j}(Mat_j), lambda_max = max_j sigma_1(Mat_j)."""
    lo, hi = np.inf, 0.0
    for j in range(3):
        svals = np.linalg.svd(matricize(t, j + 1), compute_uv=False)
        if svals[ranks[j] - 1] <= _RANK_TOL * svals[0]:
            raise DegenerateRankError(
                f"mode {j + 1}: sigma_{ranks[j]} is numerically zero"
            )
        lo = min(lo, svals[ranks[j] - 1])
        hi = max(hi, svals[0])
    return SpectralSummary(lambda_min=float(lo), lambda_max=float(hi))


def generate_signal(
    dims: tuple[int, int, int],
    ranks: tuple[int, int, int],
    lambda_lo: float,
    kappa: float,
    coherent: bool = False,
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, TuckerFactors]:
    """Random test signal T = G x_1 U_1 x_2 U_2 x_3 U_3.

    The core is superdiagonal with diagonal entries uniform on
    [lambda_lo, kappa * lambda_lo], so its matricization singular values are
    exactly those entries. Factors are left singular subspaces of Gaussian
    matrices; the coherent variant plants a sqrt(max dim) spike in the (0,0)
    entry before orthonormalizing.
    """
    if lambda_lo <= 0 or kappa < 1:
        raise ShapeError("need lambda_lo > 0 and kappa >= 1")
    if len(set(ranks)) != 1:
        raise ShapeError("superdiagonal core generation requires equal ranks")
    if any(r > p for r, p in zip(ranks, dims)):
        raise ShapeError(f"ranks {ranks} exceed dims {dims}")
    if rng is None:
        rng = make_rng(seed)
    r = ranks[0]
    diag = lambda_lo + (kappa - 1.0) * lambda_lo * rng.uniform(size=r)
    core = np.zeros(ranks)
    for i in range(r):
        core[i, i, i] = diag[i]
    p_bar = max(dims)
    factors = []
    for j in range(3):
        m = rng.standard_normal((dims[j], ranks[j]))
        if coherent:
            m[0, 0] = np.sqrt(p_bar)
        factors.append(top_left_singular(m, ranks[j]))
    factors = tuple(factors)
    return multi_mode_product(core, factors), TuckerFactors(core=core, factors=factors)
