"""Exception types shared across the package."""


class CMCFlowError(Exception):
    """Base class for all errors raised by cmcflow."""


class ModelError(CMCFlowError, ValueError):
    """Malformed or inconsistent model definition."""


class DomainError(CMCFlowError, ValueError):
    """A time or surface lies outside the model interval."""


class GeometryError(CMCFlowError):
    """Surface is not spacelike; ``index`` locates the worst grid point."""

    def __init__(self, message, index=None, margin=None):
        super().__init__(message)
        self.index = index
        self.margin = margin


class NumericError(CMCFlowError, ArithmeticError):
    """Non-finite values or an iteration that failed to converge."""


class NoBarrierError(CMCFlowError):
    """No upper barrier exists for the requested forcing constant."""


class PerturbationError(CMCFlowError):
    """Step-size search failed to produce a surface with positive mean curvature."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class NotApplicableError(CMCFlowError):
    """The requested classification needs a future-infinite model."""
