"""Exception types shared across the package."""


class OscintError(Exception):
    """Base class for all package errors."""


class DomainError(OscintError, ValueError):
    """Unsupported parameter combination or point outside a declared domain."""


class DegeneratePhaseError(OscintError):
    """A rank or non-degeneracy condition failed at the evaluation point."""


class OutOfRangeError(OscintError):
    """An implicit solve did not converge; the target is likely unreachable."""


class ResolutionError(OscintError):
    """A frequency mesh is too coarse for the requested spatial region."""


class BudgetError(OscintError):
    """A requested discretisation exceeds the configured size cap."""


class InconsistentDataError(OscintError):
    """Inputs contradict each other (e.g. amplitude support outside the domain)."""


class PartitionQualityError(OscintError):
    """Polynomial bisection failed; ``best`` carries the best result found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConditioningError(OscintError):
    """Finite-difference derivative estimates disagree across step sizes."""


class FitError(OscintError):
    """A log-log regression had too few or degenerate abscissae."""
