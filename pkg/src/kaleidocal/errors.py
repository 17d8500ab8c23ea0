"""Exception types raised across the package."""


class KaleidoscopeError(Exception):
    """Base class for all errors raised by kaleidocal."""


class GeometryError(KaleidoscopeError):
    """Invalid geometric construction or input."""


class BehindCameraError(GeometryError):
    """A point to be projected has non-positive depth."""


class InvalidPlaneError(GeometryError):
    """Mirror plane parameters violate the plane conventions."""


class DegenerateSequenceError(GeometryError):
    """Reflection sequence repeats a mirror index consecutively."""


class GenerationError(KaleidoscopeError):
    """Synthetic scene generation produced an unobservable configuration."""


class CalibrationError(KaleidoscopeError):
    """Base class for estimation failures."""


class DegenerateConfigurationError(CalibrationError):
    """Input configuration leaves the estimation problem rank-deficient."""


class InconsistentGeometryError(CalibrationError):
    """Estimated solution violates sign constraints (d > 0, depth > 0)."""


class IllPosedTriangulationError(CalibrationError):
    """Triangulation normal equations are singular or near-singular."""


class MissingChambersError(CalibrationError):
    """Observations lack chambers required by the selected method."""

    def __init__(self, missing):
        self.missing = list(missing)
        keys = ", ".join(repr(k) for k in self.missing)
        super().__init__(f"missing required chambers: {keys}")


class PoseEstimationError(CalibrationError):
    """Reference-object pose estimation failed or is degenerate."""
