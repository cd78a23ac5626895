"""Sparse graphs for multivariate count series driven by a latent AR(p) process."""

from ._countgraph import (
    InputError,
    ModelParams,
    NumericalError,
    __version__,
    build_covariates,
    compute_W,
    extract_graph,
    fit,
    inverse_spectral_density,
    joint_log_density,
    laplace_log_marginal,
    partial_coherence,
    penalty_h1,
    sample_latent,
    select_gamma,
    select_order,
    simulate,
    stationary_covariance,
    sweep,
    validate_params,
)

__all__ = [
    "InputError",
    "ModelParams",
    "NumericalError",
    "__version__",
    "build_covariates",
    "compute_W",
    "extract_graph",
    "fit",
    "inverse_spectral_density",
    "joint_log_density",
    "laplace_log_marginal",
    "partial_coherence",
    "penalty_h1",
    "sample_latent",
    "select_gamma",
    "select_order",
    "simulate",
    "stationary_covariance",
    "sweep",
    "validate_params",
]
