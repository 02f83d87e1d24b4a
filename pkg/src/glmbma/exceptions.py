"""Exception types raised across the package."""


class GlmBmaError(Exception):
    """Base class for all glmbma errors."""


class ConstructionError(GlmBmaError, ValueError):
    """Invalid arguments when building a domain object."""


class DataError(GlmBmaError, ValueError):
    """Malformed or inconsistent input data."""


class EvaluationError(GlmBmaError):
    """A numerical evaluation produced a non-finite or invalid value."""


class ConvergenceError(GlmBmaError):
    """An iterative procedure failed to converge.

    ``last_iterate`` carries the final state for diagnostics when available.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SingularMatrixError(GlmBmaError):
    """A matrix required to be positive definite or invertible was not."""


class UnsupportedOperationError(GlmBmaError):
    """The requested operation is not defined for the given configuration."""


class BracketError(GlmBmaError):
    """No interior maximum was found within the allowed search interval.

    ``side`` records which cap was hit ("low" or "high").
    """

    def __init__(self, message, side=None):
        super().__init__(message)
        self.side = side


class OverflowRangeError(GlmBmaError):
    """A quantity left the representable floating-point range."""
