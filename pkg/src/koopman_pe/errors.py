"""Exception types raised across the package."""


class KoopmanPEError(Exception):
    """Base class for all package errors."""


class NonFiniteState(KoopmanPEError):
    """An integration step produced a non-finite state."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DimensionError(KoopmanPEError, ValueError):
    pass


class SizeError(KoopmanPEError, ValueError):
    pass


class MixedSamplingError(KoopmanPEError, ValueError):
    pass


class DegenerateDataError(KoopmanPEError):
    pass


class MaskError(KoopmanPEError, ValueError):
    pass


class PoleError(KoopmanPEError):
    """The resolvent is singular: the evaluation point is (numerically) a pole."""


class LagError(KoopmanPEError, ValueError):
    pass


class GridError(KoopmanPEError, ValueError):
    pass


class RejectionBudgetError(KoopmanPEError):
    pass


class BudgetExhausted(KoopmanPEError):
    """Design loop ran out of iterations; ``result`` holds the partial design."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class GridMismatchError(KoopmanPEError, ValueError):
    pass


class InsufficientData(KoopmanPEError, ValueError):
    pass


class ConfigError(KoopmanPEError, ValueError):
    """Invalid run configuration. ``line`` is the 1-based line in the source file, if known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class OrderWarning(UserWarning):
    """A PE order above the number of channels was requested."""
