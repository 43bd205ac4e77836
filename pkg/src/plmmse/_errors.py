"""Exception hierarchy shared across the package."""


class PLMMSEError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(PLMMSEError, ValueError):
    """Malformed, non-finite or dimensionally inconsistent input."""


class InsufficientDataError(PLMMSEError, ValueError):
    """Too few samples to estimate a requested statistic."""


class SizeLimitError(PLMMSEError, ValueError):
    """Problem exceeds an enumeration guard."""


class InfeasibleConstraintsError(PLMMSEError, ValueError):
    """Moment constraints admit no valid distribution."""


class InvalidConfigurationError(PLMMSEError, ValueError):
    """Parameters that make an estimator ill-defined."""


class InvalidStateError(PLMMSEError, ValueError):
    """Filter state violating its invariants (e.g. non-PSD covariance)."""


class DegenerateDataError(PLMMSEError, ValueError):
    """Data carrying no information for the requested fit."""
