"""The g-and-k and generalised g-and-h quantile distributions.

Distribution functions, parameter-validity checks, and three inference
engines for IID data: adaptive Metropolis MCMC, rejection ABC and bounded
finite-difference stochastic approximation.
"""

__version__ = "0.1.0"

from gkdist.core import Family, QdParams, cdf, pdf, q_deriv, quantile, r_func, sample, z2q
from gkdist.errors import (
    ConfigError,
    DegenerateSummaryError,
    DomainError,
    GkError,
    InvalidParameterError,
    NumericFailure,
    SaturationWarning,
)

__all__ = [
    "Family",
    "QdParams",
    "z2q",
    "q_deriv",
    "r_func",
    "quantile",
    "sample",
    "cdf",
    "pdf",
    "GkError",
    "DomainError",
    "ConfigError",
    "NumericFailure",
    "InvalidParameterError",
    "DegenerateSummaryError",
    "SaturationWarning",
]
