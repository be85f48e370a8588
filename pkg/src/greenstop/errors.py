"""Exception types raised across the package."""


class GreenstopError(Exception):
    """Base class for all package errors."""


class ParameterError(GreenstopError, ValueError):
    """A model, problem or configuration invariant is violated."""


class QuadratureError(GreenstopError, ArithmeticError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, z: float, error: float):
        super().__init__(f"{message} (z={z:.6g}, estimated error={error:.3g})")
        self.z = z
        self.error = error


class GridResolutionError(GreenstopError):
    """A discretized kernel failed its mass, identity or positivity checks."""


class NoThresholdError(GreenstopError):
    """The threshold residual never changes sign on the search bracket."""


class GridResolutionWarning(UserWarning):
    """A resolution diagnostic is above its tolerance but results are still returned."""
