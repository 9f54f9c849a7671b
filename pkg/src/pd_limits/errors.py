"""Exception types shared across the package."""


class PDLimitsError(Exception):
    """Base class for all package errors."""


class DomainError(PDLimitsError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class TableRangeError(PDLimitsError, ValueError):
    """A function table does not cover the requested abscissa."""


class GuardError(PDLimitsError, RuntimeError):
    """A cost guard refused the computation.

    ``estimate`` carries the estimated cost (objects, tuples or bytes) that
    tripped the guard, when known.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
