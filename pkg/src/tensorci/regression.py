"""Debiased inference for linear functionals under the tensor regression model
y_i = <T, X_i> + xi_i.

Pipeline (with or without sample splitting): initial estimate -> residual
debiasing -> power-iteration refinement of the factor subspaces -> projection
onto the estimated multilinear subspace -> plug-in variance estimates and a
normal confidence interval. The design tensors are stored row-wise as a dense
(n, p1*p2*p3) matrix in canonical vectorization order, so every per-sample
reduction is a BLAS call with a fixed summation order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .core import matricize, unvectorize, vectorize
from .errors import AlignmentDegenerateError, ShapeError
from .factorize import (
    TuckerFactors,
    hooi,
    hosvd,
    power_iteration_step,
    qr_orthonormal,
    spectral_summary,
)
from .core import mode_product, multi_mode_product
from .manifold import alignment_check, incoherence_ratio

__all__ = [
    "RegressionData",
    "InferenceResult",
    "naive_init",
    "debias",
    "infer_no_split",
    "infer_split",
    "sigma_xi2_hat",
    "sigma2_hat",
    "s_a_hat",
    "sample_size_check",
    "SampleSizeReport",
    "z_quantile",
    "read_treg",
    "write_treg",
]


def z_quantile(alpha: float) -> float:
    """Upper alpha/2 standard normal quantile used for CI endpoints."""
    if not 0.0 < alpha < 1.0:
        raise ShapeError(f"alpha must be in (0, 1), got {alpha}")
    return float(ndtri(1.0 - alpha / 2.0))


@dataclass(frozen=True)
class RegressionData:
    """n scalar responses with dense design tensors (rows of `x` are the
    canonical vectorizations of the X_i)."""

    y: np.ndarray
    x: np.ndarray
    dims: tuple[int, int, int]

    def __post_init__(self):
        if self.y.ndim != 1 or self.x.ndim != 2 or self.x.shape[0] != self.y.size:
            raise ShapeError("y must be (n,) and x must be (n, p1*p2*p3)")
        if self.x.shape[1] != int(np.prod(self.dims)):
            raise ShapeError(f"design width {self.x.shape[1]} != prod{self.dims}")
        if self.y.size < 1:
            raise ShapeError("need at least one sample")

    @property
    def n(self) -> int:
        return self.y.size

    def design_tensor(self, i: int) -> np.ndarray:
        return unvectorize(self.x[i], self.dims)

    def subset(self, idx) -> "RegressionData":
        return RegressionData(y=self.y[idx], x=self.x[idx], dims=self.dims)

    @staticmethod
    def from_tensors(y, tensors) -> "RegressionData":
        tensors = [np.asarray(t, dtype=np.float64) for t in tensors]
        dims = tensors[0].shape
        x = np.stack([vectorize(t) for t in tensors])
        return RegressionData(y=np.asarray(y, dtype=np.float64), x=x, dims=dims)

    def mean_design(self) -> np.ndarray:
        return unvectorize(self.x.mean(axis=0), self.dims)


@dataclass(frozen=True)
class InferenceResult:
    estimate: float
    sigma_xi_hat: float
    sigma_hat: float
    s_a_hat: float
    z: float
    ci: tuple[float, float]
    alpha: float
    n: int | None = None
    model: str = "regression"
    diagnostics: dict = field(default_factory=dict)

    @property
    def ci_length(self) -> float:
        return self.ci[1] - self.ci[0]

    def standard_error(self) -> float:
        if self.model == "pca":
            return self.sigma_hat * self.s_a_hat
        return self.sigma_xi_hat / self.sigma_hat * self.s_a_hat / np.sqrt(self.n)


# ---------------------------------------------------------------------------
# Building blocks

def _normalize_init(t_init, ranks):
    """Accept either TuckerFactors or a dense tensor (with explicit ranks);
    returns (init tensor, initial factors)."""
    if isinstance(t_init, TuckerFactors):
        return t_init.reconstruct(), t_init.factors
    t_init = np.asarray(t_init, dtype=np.float64)
    if ranks is None:
        raise ShapeError("ranks are required when the initial estimate is a dense tensor")
    return t_init, hosvd(t_init, ranks).factors


def naive_init(data: RegressionData, ranks, sigma: float) -> TuckerFactors:
    """Convenience initializer: HOOI applied to the correlation tensor
    sum_i y_i X_i / (n sigma^2). Not minimax optimal; callers with a proper
    low-rank estimator should supply it instead."""
    corr = unvectorize(data.x.T @ data.y / (data.n * sigma**2), data.dims)
    if ranks == tuple(data.dims):
        return hosvd(corr, ranks)
    return hooi(corr, ranks).factors


def debias(t_init, data: RegressionData, sigma2: float) -> np.ndarray:
    """Residual correction: t_init + sum_i (y_i - <t_init, X_i>) X_i / (n sigma2)."""
    if sigma2 <= 0:
        raise ShapeError("sigma2 must be positive")
    t_init = np.asarray(t_init, dtype=np.float64)
    if t_init.shape != data.dims:
        raise ShapeError(f"init dims {t_init.shape} != data dims {data.dims}")
    resid = data.y - data.x @ vectorize(t_init)
    correction = data.x.T @ resid / (data.n * sigma2)
    return t_init + unvectorize(correction, data.dims)


def sigma_xi2_hat(data: RegressionData, t_init) -> float:
    """Mean squared residual of the initial fit (pooled estimator)."""
    resid = data.y - data.x @ vectorize(np.asarray(t_init, dtype=np.float64))
    return float(resid @ resid / data.n)


def sigma2_hat(data: RegressionData) -> float:
    """Design variance: mean of squared design entries."""
    flat = data.x.ravel()
    return float(flat @ flat / flat.size)


def s_a_hat(a: np.ndarray, factors, t_hat: np.ndarray) -> float:
    """Plug-in variance component sqrt(s_A^2-hat): Frobenius masses of the
    loading against the estimated tangent space, with the core row spaces
    taken from QR of the matricized estimated core."""
    factors = tuple(factors)
    core = multi_mode_product(t_hat, [u.T for u in factors])
    total = float(np.sum(core_coef(a, factors) ** 2))
    for j in range(3):
        j1, j2 = (j + 1) % 3, (j + 2) % 3
        w = qr_orthonormal(matricize(core, j + 1).T)
        b = matricize(
            mode_product(mode_product(a, factors[j1].T, j1 + 1), factors[j2].T, j2 + 1),
            j + 1,
        )
        b = b - factors[j] @ (factors[j].T @ b)
        total += float(np.sum((b @ w) ** 2))
    return float(np.sqrt(total))


def core_coef(a: np.ndarray, factors) -> np.ndarray:
    return multi_mode_product(a, [u.T for u in factors])


def sample_size_check(dims, ranks, n, kappa, lambda_min) -> "SampleSizeReport":
    """Advisory check of n against max(kappa^2 p / lambda^2, p r), constants 1."""
    p_bar, r_bar = max(dims), max(ranks)
    term_snr = kappa**2 * p_bar / lambda_min**2
    term_dof = float(p_bar * r_bar)
    return SampleSizeReport(
        n=n, term_snr=term_snr, term_dof=term_dof, passed=n >= max(term_snr, term_dof)
    )


@dataclass(frozen=True)
class SampleSizeReport:
    n: int
    term_snr: float
    term_dof: float
    passed: bool


def _project_and_estimate(t_unbs: np.ndarray, factors, a: np.ndarray) -> tuple[float, np.ndarray]:
    """<A, t_unbs projected onto the multilinear subspace>, plus the projection."""
    core = multi_mode_product(t_unbs, [u.T for u in factors])
    t_hat = multi_mode_product(core, factors)
    return float(np.sum(core_coef(a, factors) * core)), t_hat


def _diagnostics(a, est_factors: TuckerFactors, regime: str, size_report=None) -> dict:
    diag = {"sample_size": size_report} if size_report is not None else {}
    try:
        diag["incoherence"] = incoherence_ratio(a, est_factors, "right-projected")
    except AlignmentDegenerateError:
        diag["incoherence"] = (np.inf, np.inf, np.inf)
    diag["alignment"] = alignment_check(a, est_factors, regime)
    return diag


def _finish_regression(estimate, t_hat, factors, a, alpha, n, sig_xi2, sig2, diagnostics):
    s_a = s_a_hat(a, factors, t_hat)
    if s_a <= 0.0:
        raise AlignmentDegenerateError(
            "estimated variance component is zero; the loading violates the "
            "alignment condition"
        )
    se = np.sqrt(sig_xi2) / np.sqrt(sig2) * s_a / np.sqrt(n)
    zq = z_quantile(alpha)
    return InferenceResult(
        estimate=estimate,
        sigma_xi_hat=float(np.sqrt(sig_xi2)),
        sigma_hat=float(np.sqrt(sig2)),
        s_a_hat=s_a,
        z=estimate / se if se > 0 else np.inf,
        ci=(estimate - zq * se, estimate + zq * se),
        alpha=alpha,
        n=n,
        model="regression",
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Pipelines

def infer_no_split(
    data: RegressionData,
    t_init,
    a: np.ndarray,
    alpha: float = 0.05,
    sigma2: float | None = None,
    ranks=None,
) -> InferenceResult:
    """Full-data pipeline: debias against t_init, refine factors with a
    two-step power iteration, project, and build the plug-in CI.

    t_init may be TuckerFactors or a dense tensor (then `ranks` selects the
    HOSVD factors used to start the power iteration). If sigma2 is omitted
    the plug-in design variance is used in the debiasing step.
    """
    a = np.asarray(a, dtype=np.float64)
    init_tensor, factors0 = _normalize_init(t_init, ranks)
    ranks = tuple(u.shape[1] for u in factors0)
    sig2_plug = sigma2_hat(data)
    t_unbs = debias(init_tensor, data, sigma2 if sigma2 is not None else sig2_plug)
    factors = factors0
    for _ in range(2):
        factors = power_iteration_step(t_unbs, factors, ranks)
    estimate, t_hat = _project_and_estimate(t_unbs, factors, a)
    sig_xi2 = sigma_xi2_hat(data, init_tensor)
    est_core = multi_mode_product(t_hat, [u.T for u in factors])
    est_factors = TuckerFactors(core=est_core, factors=factors)
    summary = spectral_summary(est_core, ranks)
    size_report = sample_size_check(data.dims, ranks, data.n, summary.kappa, summary.lambda_min)
    diagnostics = _diagnostics(a, est_factors, "general", size_report)
    return _finish_regression(
        estimate, t_hat, factors, a, alpha, data.n, sig_xi2, sig2_plug, diagnostics
    )


def infer_split(
    data: RegressionData,
    split: tuple[int, int],
    init_fn,
    a: np.ndarray,
    alpha: float = 0.05,
    sigma2: float | None = None,
    ranks=None,
    s_a_half: str = "I",
) -> InferenceResult:
    """Sample-splitting pipeline: each half debiases the other half's initial
    estimate, factors get a single cross-fitted power-iteration step, and the
    two projected estimators are averaged with weights n_h/n.

    init_fn(half_data) must return TuckerFactors or a dense tensor.
    s_a_half selects whose refined factors feed the variance component.
    """
    n1, n2 = split
    if n1 + n2 != data.n or n1 < 1 or n2 < 1:
        raise ShapeError(f"split {split} incompatible with n={data.n}")
    if s_a_half not in ("I", "II"):
        raise ShapeError("s_a_half must be 'I' or 'II'")
    a = np.asarray(a, dtype=np.float64)
    half1 = data.subset(slice(0, n1))
    half2 = data.subset(slice(n1, data.n))
    init1, factors1_0 = _normalize_init(init_fn(half1), ranks)
    init2, factors2_0 = _normalize_init(init_fn(half2), ranks)
    ranks = tuple(u.shape[1] for u in factors1_0)
    sig2_plug = sigma2_hat(data)
    sig2 = sigma2 if sigma2 is not None else sig2_plug

    # Cross debiasing: half h's residual pass reads only the other half's init.
    t_unbs1 = debias(init2, half1, sig2)
    t_unbs2 = debias(init1, half2, sig2)
    factors1 = power_iteration_step(t_unbs1, factors2_0, ranks)
    factors2 = power_iteration_step(t_unbs2, factors1_0, ranks)

    est1, t_hat1 = _project_and_estimate(t_unbs1, factors1, a)
    est2, t_hat2 = _project_and_estimate(t_unbs2, factors2, a)
    w1, w2 = n1 / data.n, n2 / data.n
    estimate = w1 * est1 + w2 * est2
    t_hat = w1 * t_hat1 + w2 * t_hat2

    sig_xi2 = (
        sigma_xi2_hat(half1, init2) * n1 + sigma_xi2_hat(half2, init1) * n2
    ) / data.n
    factors = factors1 if s_a_half == "I" else factors2
    est_core = multi_mode_product(t_hat, [u.T for u in factors])
    est_factors = TuckerFactors(core=est_core, factors=factors)
    summary = spectral_summary(est_core, ranks)
    size_report = sample_size_check(data.dims, ranks, data.n, summary.kappa, summary.lambda_min)
    diagnostics = _diagnostics(a, est_factors, "low-rank-split-comp", size_report)
    diagnostics["half_factors"] = {"I": factors1, "II": factors2}
    return _finish_regression(
        estimate, t_hat, factors, a, alpha, data.n, sig_xi2, sig2_plug, diagnostics
    )


# ---------------------------------------------------------------------------
# TREG v1 binary format

_TREG_MAGIC = b"TREG"


def write_treg(data: RegressionData, path) -> None:
    """Little-endian binary: magic, u32 version, u64 n, u64 p1 p2 p3, then n
    records of (f64 y, p1*p2*p3 f64 design values in canonical order)."""
    with open(path, "wb") as fh:
        fh.write(_TREG_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<QQQQ", data.n, *data.dims))
        for i in range(data.n):
            fh.write(struct.pack("<d", data.y[i]))
            fh.write(data.x[i].astype("<f8").tobytes())


def read_treg(path) -> RegressionData:
    with open(path, "rb") as fh:
        if fh.read(4) != _TREG_MAGIC:
            raise ShapeError(f"{path}: not a TREG file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != 1:
            raise ShapeError(f"{path}: unsupported TREG version {version}")
        n, p1, p2, p3 = struct.unpack("<QQQQ", fh.read(32))
        q = p1 * p2 * p3
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != n * (1 + q):
        raise ShapeError(f"{path}: truncated TREG payload")
    records = payload.reshape(n, 1 + q)
    return RegressionData(
        y=records[:, 0].copy(), x=records[:, 1:].copy(), dims=(p1, p2, p3)
    )
