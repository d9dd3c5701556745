"""Exception hierarchy shared across the package."""


class QpTdoaError(Exception):
    """Base class for all package errors."""


class DomainError(QpTdoaError, ValueError):
    """An argument lies outside the domain of a model function."""


class ModelDomainError(DomainError):
    """The ionospheric model cannot be evaluated (invalid profile or logarithm argument)."""


class RayPenetratesError(ModelDomainError):
    """Takeoff angle at or beyond the penetration angle; the ray never returns."""


class CoverageError(DomainError):
    """A source/sensor distance is outside the low-angle ray coverage.

    ``sensor`` carries the zero-based sensor index when known.
    """

    def __init__(self, message, sensor=None):
        super().__init__(message)
        self.sensor = sensor


class SkipZoneError(CoverageError):
    """Ground distance below the skip distance."""


class OutOfCoverageError(CoverageError):
    """Ground distance beyond the zero-elevation range D(0)."""


class BoundarySingularityError(QpTdoaError):
    """dD/dbeta vanishes for some sensor, so the objective gradient is undefined."""


class NumericalFailure(QpTdoaError):
    """An iterative routine hit its iteration cap.  ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EmptyRegionError(NumericalFailure):
    """No feasible point could be constructed."""


class UsageError(QpTdoaError, ValueError):
    """Invalid combination of arguments."""
