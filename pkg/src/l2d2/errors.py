"""Exception types shared across the package."""


class L2D2Error(Exception):
    """Base class for all package-specific errors."""


class DegenerateDrawing(L2D2Error):
    """Raised when a raw stroke has no extent (all points identical)."""


class BadAnnotation(L2D2Error):
    """Raised for annotation indices that are out of range or unordered."""


class BehindCamera(L2D2Error):
    """Raised when a point lies at or behind the camera's near plane."""


class InsufficientSamples(L2D2Error):
    """Raised when a statistic needs more points than were supplied."""


class NotSymmetric(L2D2Error):
    """Raised when an eigendecomposition input is not symmetric."""


class PlacementInfeasible(L2D2Error):
    """Raised when no camera distance makes the whole cloud visible."""


class ShapeError(L2D2Error):
    """Raised on network input/output dimension mismatches."""


class Diverged(L2D2Error):
    """Raised when a training loss becomes non-finite."""


class CalibrationInfeasible(L2D2Error):
    """Raised when sampled calibration points fall behind the camera."""


class NoTrainingData(L2D2Error):
    """Raised when a training operation receives an empty dataset."""


class NoGroundingData(L2D2Error):
    """Raised when grounding is requested without oracle demonstrations."""


class SceneSynthesisFailed(L2D2Error):
    """Raised when constrained object placement keeps getting rejected."""


class OracleFailed(L2D2Error):
    """Raised when a scripted expert fails its own task; test-fatal."""


class UnknownScene(L2D2Error):
    """Raised when a drawing references a scene not in the session queue."""


class StartPointRejected(L2D2Error):
    """Raised when a stroke does not start at the end-effector pixel."""

    def __init__(self, message: str, expected_pixel: tuple[float, float]):
        super().__init__(message)
        self.expected_pixel = expected_pixel


class StageLocked(L2D2Error):
    """Raised when a session already has a running pipeline job."""


class EmptySession(L2D2Error):
    """Raised when a session is created with no scenes."""


class FormatError(L2D2Error):
    """Raised on malformed record files or unsupported format versions."""
