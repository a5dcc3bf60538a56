"""Exception hierarchy shared by every solver in the package."""


class LqrError(Exception):
    """Base class for all errors raised by lqrsynth."""


class DimensionError(LqrError, ValueError):
    """Matrix shapes are inconsistent with each other or with (n, m)."""


class InstabilityError(LqrError):
    """A gain does not stabilize the (discounted) closed loop."""

    def __init__(self, message, radius=None, iteration=None):
        super().__init__(message)
        self.radius = radius
        self.iteration = iteration


class NumericalError(LqrError):
    """A linear solve was singular or its residual failed the gate."""


class ConvergenceError(LqrError):
    """An iterative method hit its iteration cap."""


class ConsistencyError(LqrError, ValueError):
    """Seed vectors do not reproduce the matrix they are meant to factor."""


class ExcitationError(LqrError):
    """Trajectory data is not rich enough (covariance near singular)."""


class RecoveryError(LqrError):
    """A gain could not be recovered from an SDP solution."""
