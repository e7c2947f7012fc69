"""Exception and warning types shared across the package."""


class GkError(Exception):
    """Base class for errors raised by gkdist."""


class DomainError(GkError, ValueError):
    """An input lies outside the domain of the requested operation."""


class ConfigError(GkError, ValueError):
    """An algorithm configuration is malformed."""


class NumericFailure(GkError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy answer."""


class InvalidParameterError(NumericFailure):
    """The quantile function was found to be non-increasing."""


class DegenerateSummaryError(GkError, ValueError):
    """A summary statistic or its weight is degenerate (zero scale)."""


class SaturationWarning(RuntimeWarning):
    """A cdf root lay beyond the bracketing cap; a saturated value was returned."""
