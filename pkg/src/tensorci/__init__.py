"""Debiased inference for linear functionals of low-Tucker-rank tensors.

Point estimates and confidence intervals for <T, A> where T is an order-3
tensor of low Tucker rank observed through Gaussian tensor regression or
tensor PCA, plus a replicated Monte Carlo harness for coverage / normality
experiments.
"""

__version__ = "0.1.0"

from .core import (
    frob_norm,
    inner,
    kron,
    matricize,
    mode_product,
    multi_mode_product,
    read_tnsr,
    unmatricize,
    unvectorize,
    vectorize,
    write_tnsr,
)
from .errors import (
    AlignmentDegenerateError,
    ConfigError,
    DegenerateRankError,
    ExperimentFailure,
    ShapeError,
)
from .factorize import (
    SpectralSummary,
    TuckerFactors,
    generate_signal,
    hooi,
    hosvd,
    power_iteration_step,
    spectral_summary,
    top_left_singular,
)
from .manifold import (
    AlignmentReport,
    TangentDecomposition,
    alignment_check,
    incoherence_ratio,
    minimax_ci_length,
    project_tangent,
    variance_component,
)
from .montecarlo import (
    ExperimentConfig,
    RepRecord,
    SimulationReport,
    build_loading,
    build_signal,
    ks_statistic,
    run_experiment,
    run_pca_experiment,
    run_regression_experiment,
)
from .pca import PcaObservation, infer_pca, noise_variance_hat, snr_check
from .regression import (
    InferenceResult,
    RegressionData,
    debias,
    infer_no_split,
    infer_split,
    naive_init,
    read_treg,
    s_a_hat,
    sample_size_check,
    sigma2_hat,
    sigma_xi2_hat,
    write_treg,
    z_quantile,
)
