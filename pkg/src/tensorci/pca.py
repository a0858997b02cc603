"""Inference for linear functionals under the tensor PCA model Y = T + Z.

No debiasing is needed: Y is already unbiased for T. The pipeline is HOSVD
initialization, a two-step power iteration, projection of Y onto the
estimated multilinear subspace, and a plug-in CI with noise variance taken
from the residual energy outside that subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import multi_mode_product
from .errors import AlignmentDegenerateError, ShapeError
from .factorize import SpectralSummary, TuckerFactors, hosvd, power_iteration_step, spectral_summary
from .regression import InferenceResult, _diagnostics, core_coef, s_a_hat, z_quantile

__all__ = ["PcaObservation", "infer_pca", "noise_variance_hat", "snr_check", "SnrReport"]


@dataclass(frozen=True)
class PcaObservation:
    y: np.ndarray
    ranks: tuple[int, int, int]

    def __post_init__(self):
        if self.y.ndim != 3:
            raise ShapeError("observation must be an order-3 tensor")
        if any(r > p or r < 1 for r, p in zip(self.ranks, self.y.shape)):
            raise ShapeError(f"ranks {self.ranks} invalid for dims {self.y.shape}")


def noise_variance_hat(y: np.ndarray, factors) -> float:
    """sigma^2-hat: squared residual of Y outside the multilinear subspace,
    divided by the total number of entries."""
    core = multi_mode_product(y, [u.T for u in factors])
    resid_sq = float(np.sum(y**2) - np.sum(core**2))
    return max(resid_sq, 0.0) / y.size


def infer_pca(obs: PcaObservation, a: np.ndarray, alpha: float = 0.05) -> InferenceResult:
    """HOSVD + two power-iteration steps + projection, then the plug-in CI
    estimate +/- z_{alpha/2} * sigma-hat * s_A-hat."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != obs.y.shape:
        raise ShapeError(f"loading dims {a.shape} != observation dims {obs.y.shape}")
    factors = hosvd(obs.y, obs.ranks).factors
    for _ in range(2):
        factors = power_iteration_step(obs.y, factors, obs.ranks)
    core = multi_mode_product(obs.y, [u.T for u in factors])
    t_hat = multi_mode_product(core, factors)
    estimate = float(np.sum(core_coef(a, factors) * core))

    sig2 = noise_variance_hat(obs.y, factors)
    s_a = s_a_hat(a, factors, t_hat)
    if s_a <= 0.0:
        raise AlignmentDegenerateError(
            "estimated variance component is zero; the loading violates the "
            "alignment condition"
        )
    se = np.sqrt(sig2) * s_a
    zq = z_quantile(alpha)
    est_factors = TuckerFactors(core=core, factors=factors)
    summary = spectral_summary(core, obs.ranks)
    diagnostics = _diagnostics(a, est_factors, "pca-low-rank")
    diagnostics["snr"] = snr_check(summary, obs.y.shape, obs.ranks, "low-rank")
    return InferenceResult(
        estimate=estimate,
        sigma_xi_hat=float("nan"),
        sigma_hat=float(np.sqrt(sig2)),
        s_a_hat=s_a,
        z=estimate / se if se > 0 else np.inf,
        ci=(estimate - zq * se, estimate + zq * se),
        alpha=alpha,
        n=None,
        model="pca",
        diagnostics=diagnostics,
    )


@dataclass(frozen=True)
class SnrReport:
    lambda_min: float
    term_kappa: float
    term_dim: float
    passed: bool


def snr_check(summary: SpectralSummary, dims, ranks, regime: str = "general") -> SnrReport:
    """Advisory signal-strength check (constants set to 1):
    low-rank regime needs lambda_min >= max(kappa sqrt(p), p^{3/4} sqrt(r) log p);
    general regime needs lambda_min >= max(kappa sqrt(p), p sqrt(r))."""
    if regime not in ("low-rank", "general"):
        raise ShapeError(f"unknown SNR regime {regime!r}")
    p_bar, r_bar = max(dims), max(ranks)
    term_kappa = summary.kappa * np.sqrt(p_bar)
    if regime == "low-rank":
        term_dim = p_bar**0.75 * np.sqrt(r_bar) * np.log(p_bar)
    else:
        term_dim = p_bar * np.sqrt(r_bar)
    return SnrReport(
        lambda_min=summary.lambda_min,
        term_kappa=float(term_kappa),
        term_dim=float(term_dim),
        passed=summary.lambda_min >= max(term_kappa, term_dim),
    )
