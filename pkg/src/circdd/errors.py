"""Exception types raised across the package."""


class CircddError(Exception):
    """Base class; ``module`` names the subsystem that failed."""

    module = "circdd"


class ConfigurationError(CircddError, ValueError):
    module = "config"


class CoefficientError(CircddError, ValueError):
    module = "problem"


class GeometryError(CircddError, ValueError):
    module = "cover"


class InterpolationError(CircddError, ValueError):
    module = "interp"


class FactorizationError(CircddError, RuntimeError):
    module = "localspectral"


class TrajectoryError(CircddError, RuntimeError):
    module = "feynmankac"


class PreconditionerError(CircddError, RuntimeError):
    module = "krylov"


class SolverError(CircddError, RuntimeError):
    module = "krylov"
