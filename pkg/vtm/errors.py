"""Error types raised across the vtm package.

Every error carries a short machine-readable ``code`` that the command-line
front end prints as the prefix of its single-line error report.
"""

from typing import Optional


class VtmError(Exception):
    code = "E_VTM"


class BvhSyntaxError(VtmError, ValueError):
    code = "E_BVH_SYNTAX"

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BvhMismatchError(VtmError, ValueError):
    code = "E_BVH_MISMATCH"


class BvhFileTooLarge(VtmError):
    code = "E_BVH_TOO_LARGE"


class TopologyMismatchError(VtmError, ValueError):
    code = "E_TOPOLOGY"


class SkeletonError(VtmError, ValueError):
    code = "E_SKELETON"


class ZeroBoneError(VtmError, ValueError):
    code = "E_ZERO_BONE"


class DegenerateInputError(VtmError, ValueError):
    code = "E_DEGENERATE_INPUT"


class BehindCameraError(VtmError, ValueError):
    code = "E_BEHIND_CAMERA"


class NonPositiveDepthError(VtmError, ValueError):
    code = "E_NONPOSITIVE_DEPTH"


class ShapeError(VtmError, ValueError):
    code = "E_SHAPE"


class DegenerateFrameError(VtmError, ValueError):
    code = "E_DEGENERATE_FRAME"


class SequenceTooShortError(VtmError, ValueError):
    code = "E_SEQUENCE_TOO_SHORT"


class CheckpointVersionError(VtmError):
    code = "E_CHECKPOINT_VERSION"


class DatasetError(VtmError):
    code = "E_DATASET"


class ConfigError(VtmError, ValueError):
    code = "E_CONFIG"


__all__ = [
    "VtmError",
    "BvhSyntaxError",
    "BvhMismatchError",
    "BvhFileTooLarge",
    "TopologyMismatchError",
    "SkeletonError",
    "ZeroBoneError",
    "DegenerateInputError",
    "BehindCameraError",
    "NonPositiveDepthError",
    "ShapeError",
    "DegenerateFrameError",
    "SequenceTooShortError",
    "CheckpointVersionError",
    "DatasetError",
    "ConfigError",
]
