"""Exception types shared across the package."""


class RigposeError(Exception):
    """Base class for all package-specific errors."""


class BehindCamera(RigposeError, ValueError):
    """A point with non-positive camera-frame depth was projected."""


class EmptyTrack(RigposeError, ValueError):
    """A pose track has too few samples for the requested operation."""


class OutOfRange(RigposeError, ValueError):
    """A query timestamp lies outside the track's time span."""


class Degenerate(RigposeError, ValueError):
    """Input geometry does not constrain the solution (collinear, coincident, ...)."""


class NoSolution(RigposeError, RuntimeError):
    """A minimal solver found no admissible solution."""


class NotEnoughInliers(RigposeError, RuntimeError):
    """Robust estimation could not assemble a minimal consensus set."""


class NoOverlap(RigposeError, RuntimeError):
    """No candidate time offset leaves enough residuals inside the track span."""


class LowIdentifiability(RigposeError, RuntimeError):
    """The time-offset objective is flat across the search grid.

    Raised instead of returning an arbitrary offset, e.g. for a stationary
    calibration target. Carries the grid and objective values when available.
    """

    def __init__(self, message, offsets=None, objectives=None):
        super().__init__(message)
        self.offsets = offsets
        self.objectives = objectives


class FailedTriangulation(RigposeError, RuntimeError):
    """Too few multi-view samples survived epipolar and depth gating."""


class UnknownCamera(RigposeError, KeyError):
    """A camera id was referenced that is not part of the rig."""


class EmptyInput(RigposeError, ValueError):
    """An aggregation was requested over zero records."""


class SchemaError(RigposeError, ValueError):
    """A file has a missing, malformed, or unsupported schema version."""


class ConfigError(RigposeError, ValueError):
    """A configuration file or command-line override is invalid."""
