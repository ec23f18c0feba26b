"""Camera-space motion/keypoint tensors, the two-part body split and training windows.

Per joint a motion frame holds ``[rot6d(6), position(3), velocity(3)]``; the root
row carries the camera-space global root rotation, position and velocity, the
other rows local rotations with camera-space global positions. A keypoint frame
holds ``[u, v, du, dv]`` in pixels.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from transformers.utils import logging

from ..errors import SequenceTooShortError, ShapeError
from .camera import Camera, project, to_camera_space
from .kinematics import fk_global, finite_differences, matrix_to_6d, quat_to_matrix, sixd_to_matrix
from .skeleton import JOINT_INDEX, NUM_JOINTS, ROOT, BoneRatios, Skeleton

logger = logging.get_logger(__name__)

MOTION_CHANNELS = 12
KEYPOINT_CHANNELS = 4
ROT6D = slice(0, 6)
POSITION = slice(6, 9)
VELOCITY = slice(9, 12)
# root depth and depth velocity inside a 12-wide joint row
ROOT_DEPTH = 8
ROOT_DEPTH_VELOCITY = 11
ROOT_OUTPUT_CHANNELS = (0, 1, 2, 3, 4, 5, ROOT_DEPTH, ROOT_DEPTH_VELOCITY)

WINDOW = 32
WINDOW_STRIDE = 4


@dataclass(frozen=True, eq=False)
class MotionSequence:
    frames: np.ndarray
    skeleton_id: str = ""
    camera_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[1:] != (NUM_JOINTS, MOTION_CHANNELS) or frames.shape[0] < 1:
            raise ShapeError(f"motion frames must be [T>=1, {NUM_JOINTS}, {MOTION_CHANNELS}], got {frames.shape}")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def rot6d(self) -> np.ndarray:
        return self.frames[..., ROT6D]

    @property
    def positions(self) -> np.ndarray:
        return self.frames[..., POSITION]

    @property
    def velocities(self) -> np.ndarray:
        return self.frames[..., VELOCITY]


@dataclass(frozen=True, eq=False)
class KeypointSequence:
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[1:] != (NUM_JOINTS, KEYPOINT_CHANNELS) or frames.shape[0] < 1:
            raise ShapeError(f"keypoint frames must be [T>=1, {NUM_JOINTS}, {KEYPOINT_CHANNELS}], got {frames.shape}")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.frames[..., :2]


@dataclass(frozen=True)
class BodyPartition:
    upper_indices: Tuple[int, ...]
    lower_indices: Tuple[int, ...]

    def __post_init__(self):
        upper, lower = set(self.upper_indices), set(self.lower_indices)
        if upper | lower != set(range(NUM_JOINTS)) or upper & lower != {ROOT}:
            raise ShapeError("partition must cover every joint and share only the root")
        if self.upper_indices[0] != ROOT or self.lower_indices[0] != ROOT:
            raise ShapeError("both parts must start with the root joint")

    @property
    def num_upper(self) -> int:
        return len(self.upper_indices)

    @property
    def num_lower(self) -> int:
        return len(self.lower_indices)

    def to_dict(self) -> Dict[str, List[int]]:
        return {"upper": list(self.upper_indices), "lower": list(self.lower_indices)}

    @classmethod
    def from_dict(cls, d) -> "BodyPartition":
        return cls(tuple(d["upper"]), tuple(d["lower"]))


_LOWER = ("pelvis", "left_hip", "right_hip", "left_knee", "right_knee",
          "left_ankle", "right_ankle", "left_foot", "right_foot")
CANONICAL_PARTITION = BodyPartition(
    upper_indices=(ROOT,) + tuple(j for j in range(NUM_JOINTS) if j != ROOT and j not in {JOINT_INDEX[n] for n in _LOWER}),
    lower_indices=tuple(JOINT_INDEX[n] for n in _LOWER),
)
# whole body in the first part; the second holds the root alone
ONE_PART_PARTITION = BodyPartition(
    upper_indices=(ROOT,) + tuple(j for j in range(NUM_JOINTS) if j != ROOT),
    lower_indices=(ROOT,),
)


def default_partition(two_part: bool = True) -> BodyPartition:
    return CANONICAL_PARTITION if two_part else ONE_PART_PARTITION


@dataclass(frozen=True, eq=False)
class PreparedSequence:
    """One prepared sequence: aligned motion, its keypoints and the character's bone ratios."""

    sequence_id: str
    motion: MotionSequence
    keypoints: KeypointSequence
    bone_ratios: BoneRatios
    features: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class TrainingWindow:
    motion: MotionSequence
    keypoints: KeypointSequence
    bone_ratios: BoneRatios
    features: Optional[np.ndarray] = None
    sequence_id: str = ""
    offset: int = 0

    def __post_init__(self):
        T = self.motion.num_frames
        if T % 4 or self.keypoints.num_frames != T:
            raise ShapeError(f"window motion/keypoints must share a length divisible by 4, got {T} and {self.keypoints.num_frames}")
        if self.features is not None and np.shape(self.features)[0] != T:
            raise ShapeError(f"features cover {np.shape(self.features)[0]} frames, window has {T}")


def _camera_local_mats(rotations: np.ndarray, cam: Camera) -> np.ndarray:
    mats = quat_to_matrix(rotations)
    mats[:, ROOT] = cam.rotation_matrix @ mats[:, ROOT]
    return mats


def build_motion_sequence(rotations: np.ndarray, root_positions: np.ndarray, virtual: Skeleton,
                          cam: Camera, skeleton_id: str = "", camera_id: str = "") -> MotionSequence:
    """Camera-space representation of a motion already aligned to ``virtual``.

    ``rotations`` are local quaternions [T, 24, 4], ``root_positions`` world
    positions [T, 3].
    """
    rotations = np.asarray(rotations, dtype=np.float64)
    root_positions = np.asarray(root_positions, dtype=np.float64)
    if rotations.ndim != 3 or rotations.shape[1:] != (NUM_JOINTS, 4):
        raise ShapeError(f"rotations must be [T, {NUM_JOINTS}, 4], got {rotations.shape}")
    if root_positions.shape != (rotations.shape[0], 3):
        raise ShapeError(f"root positions must be [T, 3], got {root_positions.shape}")
    mats = _camera_local_mats(rotations, cam)
    positions, _ = fk_global(virtual.parents, virtual.offsets, mats, to_camera_space(root_positions, cam))
    frames = np.concatenate([matrix_to_6d(mats), positions, finite_differences(positions)], axis=-1)
    return MotionSequence(frames, skeleton_id=skeleton_id, camera_id=camera_id or cam.name)


def motion_positions_from_rotations(frames: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Camera-space joint positions from the rot6d channels and the root position channel."""
    frames = np.asarray(frames, dtype=np.float64)
    mats = sixd_to_matrix(frames[..., ROT6D])
    return fk_global(skeleton.parents, skeleton.offsets, mats, frames[..., ROOT, POSITION])[0]


def project_keypoints(ms: MotionSequence, cam: Camera) -> KeypointSequence:
    """Virtual 2D keypoints of the camera-space joint positions and their per-frame deltas."""
    uv = project(ms.positions, cam)
    return KeypointSequence(np.concatenate([uv, finite_differences(uv)], axis=-1))


ArrayOrSequence = Union[np.ndarray, MotionSequence, KeypointSequence]


def split_parts(x: ArrayOrSequence, p: BodyPartition = CANONICAL_PARTITION) -> Tuple[np.ndarray, np.ndarray]:
    """Upper and lower joint rows of ``x`` [..., 24, C]; the root row is in both."""
    frames = x.frames if isinstance(x, (MotionSequence, KeypointSequence)) else np.asarray(x)
    if frames.ndim < 2 or frames.shape[-2] != NUM_JOINTS:
        raise ShapeError(f"expected [..., {NUM_JOINTS}, C], got {frames.shape}")
    return frames[..., list(p.upper_indices), :], frames[..., list(p.lower_indices), :]


def merge_parts(upper: np.ndarray, lower: np.ndarray, p: BodyPartition = CANONICAL_PARTITION) -> np.ndarray:
    """Inverse of :func:`split_parts`; the root row is taken from ``upper``."""
    shape = upper.shape[:-2] + (NUM_JOINTS, upper.shape[-1])
    out = np.empty(shape, dtype=np.result_type(upper, lower))
    out[..., list(p.lower_indices), :] = lower
    out[..., list(p.upper_indices), :] = upper
    return out


def window_count(num_frames: int, window: int = WINDOW, stride: int = WINDOW_STRIDE) -> int:
    return 0 if num_frames < window else (num_frames - window) // stride + 1


def make_windows(sequences: Sequence[PreparedSequence], window: int = WINDOW,
                 stride: int = WINDOW_STRIDE) -> List[TrainingWindow]:
    """Fixed-length windows at offsets 0, stride, 2*stride, ... of every sequence.

    Sequences shorter than ``window`` are skipped with a warning.
    """
    windows: List[TrainingWindow] = []
    for seq in sequences:
        T = seq.motion.num_frames
        if T < window:
            logger.warning(str(SequenceTooShortError(
                f"sequence {seq.sequence_id or '?'} has {T} frames, needs {window}; skipped")))
            continue
        for start in range(0, window_count(T, window, stride) * stride, stride):
            stop = start + window
            windows.append(TrainingWindow(
                motion=MotionSequence(seq.motion.frames[start:stop], seq.motion.skeleton_id, seq.motion.camera_id),
                keypoints=KeypointSequence(seq.keypoints.frames[start:stop]),
                bone_ratios=seq.bone_ratios,
                features=None if seq.features is None else seq.features[start:stop],
                sequence_id=seq.sequence_id,
                offset=start,
            ))
    return windows


# normalisation ----------------------------------------------------------------

@dataclass(eq=False)
class MotionNormalizer:
    """Per joint-channel standardisation with a floor on the deviation."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros((NUM_JOINTS, MOTION_CHANNELS)))
    std: np.ndarray = field(default_factory=lambda: np.ones((NUM_JOINTS, MOTION_CHANNELS)))
    std_floor: float = 1e-3

    @classmethod
    def fit(cls, frames: Sequence[np.ndarray], std_floor: float = 1e-3) -> "MotionNormalizer":
        """Statistics over all frames of ``frames`` (arrays of shape [T, 24, 12])."""
        stacked = np.concatenate([np.asarray(f).reshape(-1, NUM_JOINTS, MOTION_CHANNELS) for f in frames])
        return cls(stacked.mean(axis=0), np.maximum(stacked.std(axis=0), std_floor), std_floor)

    def normalize(self, frames: np.ndarray) -> np.ndarray:
        return (frames - self.mean) / self.std

    def denormalize(self, frames: np.ndarray) -> np.ndarray:
        return frames * self.std + self.mean

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {"mean": np.array(self.mean), "std": np.array(self.std)}

    @classmethod
    def from_state_dict(cls, state: Dict[str, np.ndarray]) -> "MotionNormalizer":
        return cls(np.asarray(state["mean"], dtype=np.float64), np.asarray(state["std"], dtype=np.float64))


@dataclass(frozen=True)
class KeypointNormalizer:
    """Maps pixel keypoints to [-1, 1] by image size; deltas are scaled the same way."""

    width: float = 1920.0
    height: float = 1080.0

    @property
    def _scale(self) -> np.ndarray:
        return np.array([2.0 / self.width, 2.0 / self.height])

    def normalize(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float64)
        out = np.empty_like(frames)
        out[..., :2] = frames[..., :2] * self._scale - 1.0
        out[..., 2:] = frames[..., 2:] * self._scale
        return out

    def denormalize(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float64)
        out = np.empty_like(frames)
        out[..., :2] = (frames[..., :2] + 1.0) / self._scale
        out[..., 2:] = frames[..., 2:] / self._scale
        return out


__all__ = [
    "MOTION_CHANNELS", "KEYPOINT_CHANNELS", "ROOT_OUTPUT_CHANNELS", "ROOT_DEPTH", "ROOT_DEPTH_VELOCITY",
    "WINDOW", "WINDOW_STRIDE", "MotionSequence", "KeypointSequence", "BodyPartition",
    "CANONICAL_PARTITION", "ONE_PART_PARTITION", "default_partition", "PreparedSequence", "TrainingWindow",
    "build_motion_sequence",
    "motion_positions_from_rotations", "project_keypoints", "split_parts", "merge_parts",
    "window_count", "make_windows", "MotionNormalizer", "KeypointNormalizer",
]
