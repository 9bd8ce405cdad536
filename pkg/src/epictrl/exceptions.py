"""Exception types raised across the package."""


class EpictrlError(Exception):
    """Base class for package errors."""


class GraphError(EpictrlError, ValueError):
    pass


class ModelError(EpictrlError, ValueError):
    pass


class SpectralError(EpictrlError, ValueError):
    pass


class BracketError(SpectralError):
    """Bisection endpoints do not straddle the target."""

    def __init__(self, message, lo_value=None, hi_value=None):
        super().__init__(message)
        self.lo_value = lo_value
        self.hi_value = hi_value


class GPError(EpictrlError, ValueError):
    pass


class InfeasibleError(EpictrlError):
    """Raised when an allocation problem has no feasible point."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class SizeCapError(EpictrlError, ValueError):
    """Requested exact computation exceeds the supported state-space size."""
