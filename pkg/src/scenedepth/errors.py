"""Exception taxonomy for the depth-prior pipeline."""


class SceneDepthError(Exception):
    """Base class for all pipeline errors."""


class CalibrationError(SceneDepthError):
    """Camera parameters violate an invariant (non-orthonormal rotation, bad focal, ...)."""


class NoIntersectionError(SceneDepthError):
    """Viewing ray is parallel to the ground plane (pixel at or above the horizon)."""


class BehindCameraError(SceneDepthError):
    """The ray/plane intersection lies behind the camera (z_c <= 0)."""


class LabelError(SceneDepthError):
    """A label map contains ids unknown to the class table, or the table is malformed."""


class DimensionMismatchError(SceneDepthError):
    """Two per-pixel grids that must share dimensions do not."""


class InpaintError(SceneDepthError):
    """Inpainting cannot run (no known pixels to propagate from)."""


class EvaluationError(SceneDepthError):
    """An evaluation selected zero pixels, or metric inputs are out of domain."""


class ConfigError(SceneDepthError):
    """A configuration document is malformed or references missing paths."""


class PipelineStageError(SceneDepthError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
