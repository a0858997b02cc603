"""Tangent-space geometry of the fixed-Tucker-rank manifold.

The orthogonal projector onto the tangent space at T = G x_1 U_1 x_2 U_2 x_3 U_3
splits a loading tensor A into a core-direction part and three mode parts:

    P(A) = A x_1 P_{U_1} x_2 P_{U_2} x_3 P_{U_3}
         + sum_j Mat_j^{-1}( P_{U_j,perp} A_j P_j^R ),

where P_j^R projects onto the row space of Mat_j(T), realized as
(U_{j+2} kron U_{j+1}) W_j W_j^T (U_{j+2} kron U_{j+1})^T with
W_j = QR(Mat_j(G)^T). The squared norm of the projection is the variance
component that drives every confidence-interval length in the package.

The huge (p_{j+1} p_{j+2})^2 projectors are never formed; Kronecker factors
are applied one mode at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import frob_norm, matricize, mode_product, multi_mode_product, unmatricize
from .errors import AlignmentDegenerateError, ShapeError
from .factorize import TuckerFactors, qr_orthonormal, spectral_summary

__all__ = [
    "TangentDecomposition",
    "project_tangent",
    "variance_component",
    "incoherence_ratio",
    "alignment_check",
    "AlignmentReport",
    "minimax_ci_length",
    "core_row_bases",
]

ALIGNMENT_REGIMES = (
    "general",
    "low-rank-split-stat",
    "low-rank-split-comp",
    "pca-low-rank",
    "pca-general",
)


@dataclass(frozen=True)
class TangentDecomposition:
    """Pairwise-orthogonal pieces of the tangent-space projection of A."""

    core_part: np.ndarray
    mode_parts: tuple[np.ndarray, np.ndarray, np.ndarray]

    def total(self) -> np.ndarray:
        return self.core_part + sum(self.mode_parts)

    def squared_norm(self) -> float:
        return float(
            np.sum(self.core_part**2) + sum(np.sum(m**2) for m in self.mode_parts)
        )


def core_row_bases(f: TuckerFactors) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """W_j = orthonormal basis of the row space of Mat_j(core), each
    (r_{j+1} r_{j+2}) x r_j."""
    return tuple(qr_orthonormal(matricize(f.core, j + 1).T) for j in range(3))


def _contract_other_modes(a: np.ndarray, f: TuckerFactors, j: int) -> np.ndarray:
    """A x_{j+1} U_{j+1}^T x_{j+2} U_{j+2}^T (0-based j)."""
    j1, j2 = (j + 1) % 3, (j + 2) % 3
    out = mode_product(a, f.factors[j1].T, j1 + 1)
    return mode_product(out, f.factors[j2].T, j2 + 1)


def _check_dims(a: np.ndarray, f: TuckerFactors) -> None:
    if a.shape != f.dims:
        raise ShapeError(f"loading dims {a.shape} do not match factors dims {f.dims}")


def project_tangent(a: np.ndarray, f: TuckerFactors) -> TangentDecomposition:
    """Orthogonal projection of a onto the tangent space at reconstruct(f)."""
    _check_dims(a, f)
    core_coef = multi_mode_product(a, [u.T for u in f.factors])
    core_part = multi_mode_product(core_coef, f.factors)
    bases = core_row_bases(f)
    mode_parts = []
    for j in range(3):
        j1, j2 = (j + 1) % 3, (j + 2) % 3
        b = matricize(_contract_other_modes(a, f, j), j + 1)  # A_j (U_{j+2} kron U_{j+1})
        b = b - f.factors[j] @ (f.factors[j].T @ b)
        b = b @ bases[j] @ bases[j].T
        small_dims = [0, 0, 0]
        small_dims[j] = f.dims[j]
        small_dims[j1] = f.ranks[j1]
        small_dims[j2] = f.ranks[j2]
        part = unmatricize(b, j + 1, tuple(small_dims))
        part = mode_product(part, f.factors[j1], j1 + 1)
        part = mode_product(part, f.factors[j2], j2 + 1)
        mode_parts.append(part)
    return TangentDecomposition(core_part=core_part, mode_parts=tuple(mode_parts))


def variance_component(a: np.ndarray, f: TuckerFactors) -> float:
    """s_A^2: squared norm of the tangent-space projection of a.

    Equals sum_j ||P_{U_j,perp} A_j P_j^R||_F^2 + ||A x_1 U_1^T x_2 U_2^T x_3 U_3^T||_F^2.
    """
    _check_dims(a, f)
    bases = core_row_bases(f)
    total = float(np.sum(multi_mode_product(a, [u.T for u in f.factors]) ** 2))
    for j in range(3):
        b = matricize(_contract_other_modes(a, f, j), j + 1)
        b = b - f.factors[j] @ (f.factors[j].T @ b)
        total += float(np.sum((b @ bases[j]) ** 2))
    return total


def incoherence_ratio(
    a: np.ndarray, f: TuckerFactors, variant: str = "right-projected"
) -> tuple[float, float, float]:
    """Per-mode ratio ||P_{U_j} A_j P_R|| / ||P_{U_j,perp} A_j P_R||.

    variant "right-projected" uses P_R = projector onto the row space of
    Mat_j(T); "core-projected" uses P_R = P_{U_{j+2}} kron P_{U_{j+1}}.
    """
    _check_dims(a, f)
    if variant not in ("right-projected", "core-projected"):
        raise ShapeError(f"unknown incoherence variant {variant!r}")
    scale = max(frob_norm(a), 1e-300)
    bases = core_row_bases(f) if variant == "right-projected" else None
    ratios = []
    for j in range(3):
        b = matricize(_contract_other_modes(a, f, j), j + 1)
        if variant == "right-projected":
            b = b @ bases[j]
        on = f.factors[j] @ (f.factors[j].T @ b)
        num = float(np.linalg.norm(on))
        den = float(np.linalg.norm(b - on))
        if den <= 1e-12 * scale:
            raise AlignmentDegenerateError(
                f"mode {j + 1}: loading lies entirely inside the factor column "
                "space; incoherence ratio is infinite"
            )
        ratios.append(num / den)
    return tuple(ratios)


@dataclass(frozen=True)
class AlignmentReport:
    regime: str
    s_a: float
    threshold_terms: dict = field(default_factory=dict)
    threshold: float = 0.0

    @property
    def ratio(self) -> float:
        return self.s_a / self.threshold if self.threshold > 0 else np.inf

    @property
    def passed(self) -> bool:
        return self.s_a >= self.threshold


def _mode_norms(a: np.ndarray, f: TuckerFactors):
    """Norms of a contracted against one or two factor subspaces."""
    one = [frob_norm(mode_product(a, f.factors[j].T, j + 1)) for j in range(3)]
    two = [frob_norm(matricize(_contract_other_modes(a, f, j), j + 1)) for j in range(3)]
    return one, two


def alignment_check(a: np.ndarray, f: TuckerFactors, regime: str) -> AlignmentReport:
    """Alignment diagnostic: s_A against the regime's lower-bound terms.

    The unobservable constants are set to 1, so the report is advisory; it
    never gates inference.
    """
    if regime not in ALIGNMENT_REGIMES:
        raise ShapeError(f"unknown alignment regime {regime!r}")
    _check_dims(a, f)
    s_a = float(np.sqrt(variance_component(a, f)))
    p_bar = float(max(f.dims))
    r_bar = float(max(f.ranks))
    lam = spectral_summary(f.core, f.ranks).lambda_min
    a_norm = frob_norm(a)
    one, two = _mode_norms(a, f)
    one_max, two_max = max(one), max(two)

    if regime == "general":
        terms = {
            "mode_term": r_bar * p_bar ** (-0.5) / lam * one_max,
            "full_term": r_bar / (p_bar * lam**2) * a_norm,
        }
    elif regime == "low-rank-split-stat":
        terms = {
            "two_mode_term": two_max / lam**2,
            "mode_term": np.sqrt(r_bar) * p_bar ** (-0.5) / lam * one_max,
            "full_term": a_norm / (p_bar * lam**2),
        }
    elif regime == "low-rank-split-comp":
        terms = {
            "two_mode_term": p_bar ** (-0.5) / lam * two_max,
            "mode_term": r_bar * p_bar ** (-0.75) / lam * one_max,
            "full_term": r_bar * p_bar ** (-1.5) / lam**2 * a_norm,
        }
    elif regime == "pca-low-rank":
        terms = {
            "two_mode_term": p_bar ** (-0.5) * two_max,
            "mode_term": r_bar * p_bar ** (-0.75) * one_max,
            "full_term": r_bar * p_bar ** (-1.5) * a_norm,
        }
    else:  # pca-general
        terms = {
            "mode_term": r_bar * p_bar ** (-0.5) * one_max,
            "full_term": r_bar / p_bar * a_norm,
        }
    return AlignmentReport(
        regime=regime, s_a=s_a, threshold_terms=terms, threshold=max(terms.values())
    )


def minimax_ci_length(
    s_a: float,
    *,
    sigma: float,
    n: int | None = None,
    sigma_xi: float | None = None,
) -> float:
    """Structural factor of the minimax lower bound on expected CI length
    (leading constant taken as 1): regression sigma_xi/(sigma sqrt(n)) * s_A
    when n is given, otherwise PCA sigma * s_A."""
    if s_a < 0 or sigma <= 0:
        raise ShapeError("need s_a >= 0 and sigma > 0")
    if n is None:
        return sigma * s_a
    if sigma_xi is None or sigma_xi <= 0 or n <= 0:
        raise ShapeError("regression bound needs sigma_xi > 0 and n > 0")
    return sigma_xi / (sigma * np.sqrt(n)) * s_a
