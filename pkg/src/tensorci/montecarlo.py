"""Replicated simulation experiments: signal/loading construction, data
generation, inference per replication, and statistical summaries (coverage,
mean CI length, KS normality, efficiency against the minimax bound).

Each replication is a pure function of (config, grid index, rep index): RNG
streams are derived from those coordinates, so reports are byte-identical
regardless of worker count or execution order.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import frob_norm, inner, unvectorize, vectorize
from .errors import (
    AlignmentDegenerateError,
    ConfigError,
    DegenerateRankError,
    ExperimentFailure,
)
from .factorize import TuckerFactors, generate_signal
from .manifold import minimax_ci_length, variance_component
from .pca import PcaObservation, infer_pca
from .regression import RegressionData, infer_no_split, infer_split, z_quantile
from .rng import STREAM_LOADING, STREAM_REP, STREAM_SIGNAL, make_rng

__all__ = [
    "ExperimentConfig",
    "RepRecord",
    "SimulationReport",
    "build_loading",
    "build_signal",
    "run_experiment",
    "run_regression_experiment",
    "run_pca_experiment",
    "ks_statistic",
    "normal_cdf",
    "report_csv_lines",
    "summary_lines",
    "histogram_counts",
    "histogram_csv_lines",
]

MODELS = ("regression-nosplit", "regression-split", "pca")
MAX_FAILURE_RATE = 0.01
HIST_BINS = 41
HIST_RANGE = (-4.0, 4.0)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    dims: tuple[int, int, int]
    ranks: tuple[int, int, int]
    loading: str
    grid: tuple[float, ...]
    signal: str = "tucker"
    kappa: float = 1.0
    lambda_lo: float = 1.0
    coherent: bool = False
    reps: int = 1000
    alpha: float = 0.05
    seed: int = 0
    xi_scale: float = 1.0
    init_mode: str = "oracle-spiked"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.signal not in ("tucker", "spike"):
            raise ConfigError(f"unknown signal kind {self.signal!r}")
        if self.init_mode not in ("oracle-spiked", "truth"):
            raise ConfigError(f"unknown init_mode {self.init_mode!r}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.grid:
            raise ConfigError("grid must be nonempty")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")


# ---------------------------------------------------------------------------
# Loading and signal constructions

_LOADING_RE = re.compile(r"^([a-z-]+)(?:\(([^)]*)\))?$")


def _basis_tensor(dims, idx) -> np.ndarray:
    t = np.zeros(dims)
    t[idx[0] - 1, idx[1] - 1, idx[2] - 1] = 1.0
    return t


def build_loading(spec: str, dims, seed: int = 0) -> np.ndarray:
    """Loading tensor from a compact spec string.

    Kinds: full-rank-gaussian, lowrank-average, entrywise(k1,k2,k3),
    entrydiff(k1,k2,k3;l1,l2,l3), rowmean(k2,k3), pca-benchmark-spike
    (alias for entrywise(1,1,1)). Indices are 1-based.
    """
    m = _LOADING_RE.match(spec.strip())
    if not m:
        raise ConfigError(f"malformed loading spec {spec!r}")
    kind, args = m.group(1), m.group(2)

    if kind == "full-rank-gaussian":
        a = make_rng(seed, STREAM_LOADING).standard_normal(dims)
        return a / frob_norm(a)
    if kind == "lowrank-average":
        sizes = [int(2 * d**0.25) for d in dims]
        a = np.zeros(dims)
        a[: sizes[0], : sizes[1], : sizes[2]] = 1.0
        return a / math.sqrt(sizes[0] * sizes[1] * sizes[2])
    if kind == "entrywise":
        idx = tuple(int(v) for v in args.split(","))
        return _basis_tensor(dims, idx)
    if kind == "entrydiff":
        first, second = args.split(";")
        a = _basis_tensor(dims, tuple(int(v) for v in first.split(",")))
        a -= _basis_tensor(dims, tuple(int(v) for v in second.split(",")))
        return a
    if kind == "rowmean":
        k2, k3 = (int(v) for v in args.split(","))
        a = np.zeros(dims)
        a[:, k2 - 1, k3 - 1] = 1.0 / dims[0]
        return a
    if kind == "pca-benchmark-spike":
        return _basis_tensor(dims, (1, 1, 1))
    raise ConfigError(f"unknown loading kind {kind!r}")


def spike_vector(p: int) -> np.ndarray:
    """Benchmark incoherent unit vector (2 p^{1/4}, 1, ..., 1) normalized."""
    u = np.ones(p)
    u[0] = 2.0 * p**0.25
    return u / math.sqrt(4.0 * math.sqrt(p) + (p - 1))


def build_signal(cfg: ExperimentConfig, grid_value: float) -> tuple[np.ndarray, TuckerFactors]:
    """Deterministic signal for one grid point.

    "tucker": superdiagonal core, Gaussian-subspace factors; the grid value
    sets lambda_lo for PCA runs while regression runs use cfg.lambda_lo.
    "spike": rank-one benchmark T = lambda u x u x u with the incoherent
    spike vector and lambda = grid value.
    """
    if cfg.signal == "spike":
        lam = grid_value if cfg.model == "pca" else cfg.lambda_lo
        us = tuple(spike_vector(p).reshape(-1, 1) for p in cfg.dims)
        core = np.full((1, 1, 1), lam)
        tf = TuckerFactors(core=core, factors=us)
        return tf.reconstruct(), tf
    lambda_lo = grid_value if cfg.model == "pca" else cfg.lambda_lo
    return generate_signal(
        cfg.dims,
        cfg.ranks,
        lambda_lo=lambda_lo,
        kappa=cfg.kappa,
        coherent=cfg.coherent,
        rng=make_rng(cfg.seed, STREAM_SIGNAL),
    )


# ---------------------------------------------------------------------------
# Per-replication runners

@dataclass(frozen=True)
class RepRecord:
    rep: int
    estimate: float
    truth: float
    z: float
    ci_lo: float
    ci_hi: float
    covered: bool
    se: float


def _standardized(estimate: float, truth: float, se: float) -> float:
    if se == 0.0:
        return 0.0 if estimate == truth else math.inf
    return (estimate - truth) / se


def _oracle_spiked_init(t: np.ndarray, data: RegressionData, p_bar: int, r_bar: int) -> np.ndarray:
    xbar = data.x.mean(axis=0)
    spike = xbar / np.linalg.norm(xbar) * math.sqrt(p_bar * r_bar / data.n)
    return t + unvectorize(spike, data.dims)


def _run_one_rep(cfg: ExperimentConfig, gi: int, grid_value: float, rep: int):
    """One replication; returns RepRecord or an error string."""
    t, _ = build_signal(cfg, grid_value)
    a = build_loading(cfg.loading, cfg.dims, seed=cfg.seed)
    truth = inner(a, t)
    rng = make_rng(cfg.seed, STREAM_REP, gi, rep)
    p_bar, r_bar = max(cfg.dims), max(cfg.ranks)
    try:
        if cfg.model == "pca":
            z_noise = rng.standard_normal(cfg.dims)
            obs = PcaObservation(y=t + cfg.xi_scale * z_noise, ranks=cfg.ranks)
            res = infer_pca(obs, a, alpha=cfg.alpha)
        else:
            n = int(round(grid_value))
            q = int(np.prod(cfg.dims))
            x = rng.standard_normal((n, q))
            xi = cfg.xi_scale * rng.standard_normal(n)
            y = x @ vectorize(t) + xi
            data = RegressionData(y=y, x=x, dims=cfg.dims)
            if cfg.model == "regression-nosplit":
                if cfg.init_mode == "truth":
                    init = t
                else:
                    init = _oracle_spiked_init(t, data, p_bar, r_bar)
                res = infer_no_split(data, init, a, alpha=cfg.alpha, ranks=cfg.ranks)
            else:
                n1 = n // 2
                if cfg.init_mode == "truth":
                    init_fn = lambda half: t  # noqa: E731
                else:
                    init_fn = lambda half: _oracle_spiked_init(t, half, p_bar, r_bar)  # noqa: E731
                res = infer_split(
                    data, (n1, n - n1), init_fn, a, alpha=cfg.alpha, ranks=cfg.ranks
                )
    except (DegenerateRankError, AlignmentDegenerateError) as exc:
        return rep, f"{type(exc).__name__}: {exc}"
    se = res.standard_error()
    return rep, RepRecord(
        rep=rep,
        estimate=res.estimate,
        truth=truth,
        z=_standardized(res.estimate, truth, se),
        ci_lo=res.ci[0],
        ci_hi=res.ci[1],
        covered=bool(res.ci[0] <= truth <= res.ci[1]),
        se=se,
    )


def _rep_task(args):
    return _run_one_rep(*args)


# ---------------------------------------------------------------------------
# Reports

@dataclass(frozen=True)
class SimulationReport:
    model: str
    grid_value: float
    records: tuple[RepRecord, ...]
    failures: tuple[tuple[int, str], ...]
    coverage: float
    mean_ci_length: float
    ks_stat: float
    ks_passed: bool
    efficiency_ratio: float
    alpha: float
    oracle_s_a: float
    extras: dict = field(default_factory=dict)

    @property
    def failure_rate(self) -> float:
        total = len(self.records) + len(self.failures)
        return len(self.failures) / total if total else 0.0


def _aggregate(cfg: ExperimentConfig, grid_value: float, results) -> SimulationReport:
    records = tuple(r for _, r in results if isinstance(r, RepRecord))
    failures = tuple((rep, r) for rep, r in results if not isinstance(r, RepRecord))
    zs = np.array([r.z for r in records if math.isfinite(r.z)])
    coverage = float(np.mean([r.covered for r in records])) if records else math.nan
    mean_len = float(np.mean([r.ci_hi - r.ci_lo for r in records])) if records else math.nan
    ks = ks_statistic(zs) if zs.size else math.nan
    ks_crit = 1.63 / math.sqrt(zs.size) if zs.size else math.nan

    _, tf = build_signal(cfg, grid_value)
    a = build_loading(cfg.loading, cfg.dims, seed=cfg.seed)
    s_a = math.sqrt(variance_component(a, tf))
    if cfg.model == "pca":
        bound = minimax_ci_length(s_a, sigma=1.0)
    else:
        bound = minimax_ci_length(
            s_a, sigma=1.0, sigma_xi=max(cfg.xi_scale, 1e-300), n=int(round(grid_value))
        )
    zq = z_quantile(cfg.alpha)
    efficiency = mean_len / (2.0 * zq * bound) if bound > 0 else math.nan
    return SimulationReport(
        model=cfg.model,
        grid_value=grid_value,
        records=records,
        failures=failures,
        coverage=coverage,
        mean_ci_length=mean_len,
        ks_stat=float(ks),
        ks_passed=bool(ks < ks_crit) if math.isfinite(ks) else False,
        efficiency_ratio=float(efficiency),
        alpha=cfg.alpha,
        oracle_s_a=float(s_a),
    )


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[SimulationReport]:
    """All grid points, cfg.reps replications each. Raises ExperimentFailure
    when more than 1% of replications fail at any grid point (the partial
    reports ride on the exception)."""
    tasks = [
        (cfg, gi, gv, rep)
        for gi, gv in enumerate(cfg.grid)
        for rep in range(cfg.reps)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_rep_task, tasks, chunksize=8))
    else:
        results = [_rep_task(t) for t in tasks]

    reports = []
    for gi, gv in enumerate(cfg.grid):
        chunk = results[gi * cfg.reps : (gi + 1) * cfg.reps]
        reports.append(_aggregate(cfg, gv, chunk))
    breached = [r for r in reports if r.failure_rate > MAX_FAILURE_RATE]
    if breached:
        raise ExperimentFailure(
            f"failure rate above {MAX_FAILURE_RATE:.0%} at grid values "
            f"{[r.grid_value for r in breached]}",
            reports=reports,
        )
    return reports


def run_regression_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[SimulationReport]:
    if cfg.model == "pca":
        raise ConfigError("config model is pca; use run_pca_experiment")
    return run_experiment(cfg, workers=workers)


def run_pca_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[SimulationReport]:
    if cfg.model != "pca":
        raise ConfigError(f"config model is {cfg.model!r}; use run_regression_experiment")
    return run_experiment(cfg, workers=workers)


# ---------------------------------------------------------------------------
# Normality diagnostic

def normal_cdf(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def ks_statistic(zs) -> float:
    """sup |empirical CDF - standard normal CDF|."""
    zs = np.sort(np.asarray(zs, dtype=np.float64))
    if zs.size == 0:
        raise ConfigError("ks_statistic needs a nonempty sample")
    n = zs.size
    cdf = normal_cdf(zs)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


# ---------------------------------------------------------------------------
# Serialization of reports

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def report_csv_lines(report: SimulationReport) -> list[str]:
    lines = ["rep,estimate,truth,z,ci_lo,ci_hi,covered"]
    for r in report.records:
        lines.append(
            ",".join(
                [
                    str(r.rep),
                    _fmt(r.estimate),
                    _fmt(r.truth),
                    _fmt(r.z),
                    _fmt(r.ci_lo),
                    _fmt(r.ci_hi),
                    _fmt(r.covered),
                ]
            )
        )
    return lines


def summary_lines(report: SimulationReport) -> list[str]:
    pairs = [
        ("model", report.model),
        ("grid_value", _fmt(report.grid_value)),
        ("reps_ok", len(report.records)),
        ("reps_failed", len(report.failures)),
        ("coverage", _fmt(report.coverage)),
        ("mean_ci_length", _fmt(report.mean_ci_length)),
        ("ks_stat", _fmt(report.ks_stat)),
        ("ks_passed", _fmt(report.ks_passed)),
        ("efficiency_ratio", _fmt(report.efficiency_ratio)),
        ("oracle_s_a", _fmt(report.oracle_s_a)),
        ("alpha", _fmt(report.alpha)),
    ]
    return [f"{k}={v}" for k, v in pairs]


def histogram_counts(report: SimulationReport):
    zs = [r.z for r in report.records if math.isfinite(r.z)]
    counts, edges = np.histogram(zs, bins=HIST_BINS, range=HIST_RANGE)
    return counts, edges


def histogram_csv_lines(report: SimulationReport) -> list[str]:
    counts, edges = histogram_counts(report)
    lines = ["bin_lo,bin_hi,count"]
    for i, c in enumerate(counts):
        lines.append(f"{_fmt(edges[i])},{_fmt(edges[i + 1])},{int(c)}")
    return lines


def write_histogram_plot(report: SimulationReport, path) -> None:
    """Histogram of the standardized statistic with the N(0,1) density, SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    counts, edges = histogram_counts(report)
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    total = max(counts.sum(), 1)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(centers, counts / (total * width), width=width, color="#7f9fca", edgecolor="white")
    grid = np.linspace(*HIST_RANGE, 200)
    ax.plot(grid, np.exp(-grid**2 / 2) / math.sqrt(2 * math.pi), "k-", lw=1.2)
    ax.set_xlabel("standardized statistic")
    ax.set_ylabel("density")
    ax.set_title(f"{report.model}, grid={report.grid_value:g}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
