"""Bounded-support q-Gaussians: densities, exact samplers and Stein-type gradient estimators."""
from .core import (
    OUTSIDE_SUPPORT,
    Q_MAX,
    EscortLaw,
    Moments,
    QGaussian,
    RadialLaw,
    UnsupportedRegimeError,
    escort,
    in_support,
    log_density,
    mahalanobis_sq,
    moments,
    radial_law,
    radius_sq,
)
from .estimators import (
    GradEstimate,
    SourceMismatchError,
    escort_weights,
    gaussian_baseline_grads,
    grad_mu,
    grad_sigma,
    prop1_estimators,
    stein_lhs,
    stein_rhs,
)
from .sampler import CHUNK_SIZE, GaussianLimitWarning, SampleBatch, derive_seed, sample, sample_isotropic

__version__ = "0.1.0"

__all__ = [
    "OUTSIDE_SUPPORT",
    "Q_MAX",
    "EscortLaw",
    "Moments",
    "QGaussian",
    "RadialLaw",
    "UnsupportedRegimeError",
    "escort",
    "in_support",
    "log_density",
    "mahalanobis_sq",
    "moments",
    "radial_law",
    "radius_sq",
    "GradEstimate",
    "SourceMismatchError",
    "escort_weights",
    "gaussian_baseline_grads",
    "grad_mu",
    "grad_sigma",
    "prop1_estimators",
    "stein_lhs",
    "stein_rhs",
    "CHUNK_SIZE",
    "GaussianLimitWarning",
    "SampleBatch",
    "derive_seed",
    "sample",
    "sample_isotropic",
]
