"""Exception types raised across the package."""


class CasMoreError(Exception):
    """Base class for all errors raised by casmore."""


class DimensionMismatchError(CasMoreError, ValueError):
    pass


class FactorizationError(CasMoreError, ValueError):
    """A matrix that must be symmetric positive definite could not be factorized."""


class DegenerateTargetsError(CasMoreError, ValueError):
    """All regression targets are equal, so they carry no information."""


class FitError(CasMoreError):
    """The surrogate could not be fitted (e.g. rank deficient sample buffer)."""


class SolverError(CasMoreError):
    """A dual minimization did not converge or produced non-finite values."""


class OracleError(CasMoreError):
    """The compatible-features least squares problem is rank deficient."""
