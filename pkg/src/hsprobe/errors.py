"""Exception types raised across the package."""


class HsProbeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HsProbeError, ValueError):
    """Invalid shape, material, grid or run configuration."""


class PreconditionError(HsProbeError, ValueError):
    """An operation was called outside its domain of validity."""


class GeometryError(PreconditionError):
    """A probe point or evaluation point violates the scatterer geometry."""


class SingularityError(PreconditionError):
    """A kernel was evaluated at coincident points."""


class ConvergenceError(HsProbeError, RuntimeError):
    """An iterative solve stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class OracleError(HsProbeError, RuntimeError):
    """A reference computation could not reach its stated accuracy."""


class NotApplicableError(HsProbeError, ValueError):
    """The requested quantity is undefined for the given input."""
