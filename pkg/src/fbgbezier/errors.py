"""Exception hierarchy.

Every error carries a CLI exit code so the command layer can map failures
without inspecting messages.
"""


class FbgBezierError(Exception):
    exit_code = 3


class GeometryError(FbgBezierError):
    """Invalid fiber geometry (core layout, grating counts)."""


class CalibrationError(FbgBezierError):
    """Missing or non-physical calibration constants."""


class DimensionError(FbgBezierError):
    """Array shapes disagree with the sensor geometry or model."""


class FrameError(FbgBezierError):
    """A frame could not be parsed or contains non-finite values."""


class FrameShapeError(FrameError):
    """A well-formed frame whose grating/core counts differ from the calibration."""


class FitError(FbgBezierError):
    """Curve fitting failed (too few points, rank deficiency)."""


class DomainError(FbgBezierError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DataError(FbgBezierError):
    """Dataset or model file is malformed, empty or of the wrong version."""


class NumericalError(FbgBezierError):
    """Optimizer diverged or a linear system could not be solved."""

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UsageError(FbgBezierError):
    exit_code = 2
