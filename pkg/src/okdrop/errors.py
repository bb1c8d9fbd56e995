"""Exception hierarchy shared by all modules."""


class OkdropError(Exception):
    """Base class for library errors."""


class ParameterError(OkdropError, ValueError):
    """Invalid model or numerical parameter."""


class SingularityError(OkdropError, ValueError):
    """Kernel evaluated exactly at its singular point."""


class GeometryError(OkdropError, ValueError):
    """Degenerate, overlapping or oversized droplet geometry."""


class DomainError(OkdropError, ValueError):
    """Input outside the domain of a function (e.g. negative density)."""


class ConsistencyError(OkdropError, RuntimeError):
    """Two routes to the same quantity disagree beyond tolerance."""


class ConstructionError(OkdropError, RuntimeError):
    """Recovery placement could not satisfy its spacing constraints."""


class RelaxationError(OkdropError, RuntimeError):
    """Descent could not make progress without violating constraints."""


class LiftingError(OkdropError, ValueError):
    """Droplets too close to be lifted to a phase field."""


class ConstraintError(OkdropError, ValueError):
    """Phase field violates its mass constraint."""


class StepSizeError(OkdropError, RuntimeError):
    """Gradient-flow step increased the energy."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt
