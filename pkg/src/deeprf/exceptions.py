"""Exception types shared across the package."""


class DeepRFError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DeepRFError):
    """Invalid architecture, dimensions or run configuration."""


class QuadratureError(DeepRFError):
    """Gaussian expectation did not pass its verification pass.

    Raised when the doubled-order check disagrees beyond tolerance, which
    signals a divergent moment or an activation outside the admissible class.
    """


class SolverError(DeepRFError):
    """A fixed point or root solve failed to converge.

    Carries the last residual and iteration count for diagnostics.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateVarianceError(DeepRFError):
    """Channel integrals requested with non-positive conditional variance."""
