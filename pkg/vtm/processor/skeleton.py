"""Kinematic skeletons on the canonical 24-joint layout.

The joint table below is the single source of joint order, parents and the
template rest pose; every other module indexes joints through it.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from transformers.utils import logging

from ..errors import SkeletonError, TopologyMismatchError, ZeroBoneError

logger = logging.get_logger(__name__)

SKELETON_TEXT_HEADER = "# vtm-skeleton v1"

JOINT_NAMES: Tuple[str, ...] = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)
PARENTS: Tuple[int, ...] = (
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
)
NUM_JOINTS = len(JOINT_NAMES)
NUM_BONES = NUM_JOINTS - 1
ROOT = 0
JOINT_INDEX: Dict[str, int] = {name: i for i, name in enumerate(JOINT_NAMES)}
END_EFFECTORS: Tuple[int, ...] = tuple(
    JOINT_INDEX[n] for n in ("head", "left_hand", "right_hand", "left_foot", "right_foot")
)
LEG_CHAINS: Tuple[Tuple[int, ...], ...] = (
    tuple(JOINT_INDEX[n] for n in ("left_knee", "left_ankle", "left_foot")),
    tuple(JOINT_INDEX[n] for n in ("right_knee", "right_ankle", "right_foot")),
)

# rest pose in meters, Y up, character facing +Z, left is +X
TEMPLATE_OFFSETS = np.array([
    [0.00, 0.00, 0.00],
    [0.06, -0.09, 0.00], [-0.06, -0.09, 0.00], [0.00, 0.11, 0.00],
    [0.00, -0.38, 0.00], [0.00, -0.38, 0.00], [0.00, 0.13, 0.00],
    [0.00, -0.40, 0.00], [0.00, -0.40, 0.00], [0.00, 0.05, 0.00],
    [0.00, -0.05, 0.12], [0.00, -0.05, 0.12], [0.00, 0.21, 0.00],
    [0.07, 0.12, 0.00], [-0.07, 0.12, 0.00], [0.00, 0.10, 0.00],
    [0.10, 0.03, 0.00], [-0.10, 0.03, 0.00],
    [0.26, 0.00, 0.00], [-0.26, 0.00, 0.00],
    [0.25, 0.00, 0.00], [-0.25, 0.00, 0.00],
    [0.08, 0.00, 0.00], [-0.08, 0.00, 0.00],
])

_ALIASES = {"hips": "pelvis", "hip": "pelvis", "root": "pelvis"}


def canonical_joint_name(name: str) -> Optional[str]:
    """Map common SMPL-style spellings (``Pelvis``, ``L_Hip``, ``LeftHand``...) onto the joint table."""
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    if key.startswith("l_"):
        key = "left_" + key[2:]
    elif key.startswith("r_"):
        key = "right_" + key[2:]
    if key in JOINT_INDEX:
        return key
    compact = key.replace("_", "")
    if compact in _ALIASES:
        return _ALIASES[compact]
    for candidate in JOINT_NAMES:
        if candidate.replace("_", "") == compact:
            return candidate
    return None


@dataclass(frozen=True, eq=False)
class Skeleton:
    joint_names: Tuple[str, ...]
    parents: Tuple[int, ...]
    offsets: np.ndarray

    def __post_init__(self):
        offsets = np.array(self.offsets, dtype=np.float64)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        J = len(self.joint_names)
        if J != NUM_JOINTS:
            raise SkeletonError(f"skeleton must have {NUM_JOINTS} joints, got {J}")
        if len(self.parents) != J or offsets.shape != (J, 3):
            raise SkeletonError(f"inconsistent skeleton: {J} names, {len(self.parents)} parents, offsets {offsets.shape}")
        roots = [j for j, p in enumerate(self.parents) if p < 0]
        if roots != [0]:
            raise SkeletonError(f"skeleton needs exactly one root at index 0, found {roots}")
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < j:
                raise SkeletonError(f"joint {self.joint_names[j]} has parent {p}; parents must precede children")
        lengths = np.linalg.norm(offsets[1:], axis=1)
        if np.any(lengths <= 0):
            bad = [self.joint_names[j + 1] for j in np.flatnonzero(lengths <= 0)]
            raise SkeletonError(f"zero-length bones: {bad}")
        offsets[0] = 0.0
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    def bone_lengths(self) -> np.ndarray:
        """Lengths of the 23 non-root bones, ordered by child joint index."""
        return np.linalg.norm(self.offsets[1:], axis=1)

    def leg_length(self) -> float:
        return float(np.mean([np.linalg.norm(self.offsets[list(chain)], axis=1).sum() for chain in LEG_CHAINS]))

    def with_offsets(self, offsets: np.ndarray) -> "Skeleton":
        return Skeleton(self.joint_names, self.parents, offsets)

    def same_topology(self, other: "Skeleton") -> bool:
        return self.joint_names == other.joint_names and self.parents == other.parents

    def to_text(self) -> str:
        lines = [SKELETON_TEXT_HEADER, "# name parent x y z"]
        for name, parent, off in zip(self.joint_names, self.parents, self.offsets):
            lines.append(f"{name} {parent} {off[0]:.17g} {off[1]:.17g} {off[2]:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Skeleton":
        lines = [line.strip() for line in text.splitlines() if line.strip()]
        if not lines or lines[0] != SKELETON_TEXT_HEADER:
            raise SkeletonError(f"not a skeleton table (expected header {SKELETON_TEXT_HEADER!r})")
        names, parents, offsets = [], [], []
        for line in lines[1:]:
            if line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise SkeletonError(f"malformed skeleton row: {line!r}")
            names.append(parts[0])
            parents.append(int(parts[1]))
            offsets.append([float(v) for v in parts[2:]])
        return cls(tuple(names), tuple(parents), np.array(offsets))


@dataclass(frozen=True, eq=False)
class BoneRatios:
    """Per-bone length ratios of a character against the virtual skeleton."""

    ratios: np.ndarray = field(default_factory=lambda: np.ones(NUM_BONES))

    def __post_init__(self):
        ratios = np.array(self.ratios, dtype=np.float64).reshape(-1)
        if ratios.shape != (NUM_BONES,):
            raise SkeletonError(f"expected {NUM_BONES} bone ratios, got {ratios.shape[0]}")
        if np.any(ratios <= 0) or not np.all(np.isfinite(ratios)):
            raise SkeletonError("bone ratios must be finite and positive")
        ratios.setflags(write=False)
        object.__setattr__(self, "ratios", ratios)


def canonical_skeleton(offsets: Optional[np.ndarray] = None) -> Skeleton:
    return Skeleton(JOINT_NAMES, PARENTS, TEMPLATE_OFFSETS if offsets is None else offsets)


def _check_topology(skeletons: Sequence[Skeleton]):
    first = skeletons[0]
    for s in skeletons[1:]:
        if not first.same_topology(s):
            raise TopologyMismatchError("skeletons do not share joint names and parents")


def average_skeleton(skeletons: Sequence[Skeleton]) -> Skeleton:
    """Mean bone lengths along the normalised mean of each bone's unit direction."""
    if not skeletons:
        raise SkeletonError("cannot average an empty list of skeletons")
    _check_topology(skeletons)
    offsets = np.stack([s.offsets[1:] for s in skeletons])
    lengths = np.linalg.norm(offsets, axis=2)
    directions = (offsets / lengths[..., None]).mean(axis=0)
    norms = np.linalg.norm(directions, axis=1)
    if np.any(norms < 1e-9):
        raise SkeletonError("bone directions cancel out; cannot average")
    averaged = np.zeros_like(skeletons[0].offsets)
    averaged[1:] = (directions / norms[:, None]) * lengths.mean(axis=0)[:, None]
    return skeletons[0].with_offsets(averaged)


def bone_ratios(skeleton: Skeleton, virtual: Skeleton) -> BoneRatios:
    _check_topology([skeleton, virtual])
    virtual_lengths = virtual.bone_lengths()
    if np.any(virtual_lengths < 1e-12):
        raise ZeroBoneError("virtual skeleton has a zero-length bone")
    return BoneRatios(skeleton.bone_lengths() / virtual_lengths)


def apply_ratios(virtual: Skeleton, ratios: BoneRatios) -> Skeleton:
    """Scale each bone of ``virtual`` by its ratio, keeping directions."""
    if not isinstance(ratios, BoneRatios):
        ratios = BoneRatios(ratios)
    offsets = np.array(virtual.offsets)
    offsets[1:] *= ratios.ratios[:, None]
    return virtual.with_offsets(offsets)


def align_motion(rotations: np.ndarray, root_positions: np.ndarray, source: Skeleton,
                 target: Skeleton) -> Tuple[np.ndarray, np.ndarray]:
    """Retarget a motion from ``source`` onto ``target`` of the same topology.

    Joint rotations are returned unchanged; the root trajectory is scaled by the
    ratio of mean leg lengths (knee, ankle and foot bones) target / source.
    """
    _check_topology([source, target])
    rotations = np.asarray(rotations, dtype=np.float64)
    if rotations.shape[-2] != source.num_joints:
        raise TopologyMismatchError(f"rotations cover {rotations.shape[-2]} joints, skeleton has {source.num_joints}")
    scale = target.leg_length() / source.leg_length()
    return rotations.copy(), np.asarray(root_positions, dtype=np.float64) * scale


def fit_skeleton(joint_positions: np.ndarray, template: Optional[Skeleton] = None) -> Skeleton:
    """Skeleton whose bone lengths are per-bone medians over frames of ``joint_positions`` [T, J, 3].

    Bone directions come from ``template``.
    """
    template = template if template is not None else canonical_skeleton()
    positions = np.asarray(joint_positions, dtype=np.float64)
    if positions.ndim != 3 or positions.shape[1:] != (template.num_joints, 3):
        raise SkeletonError(f"expected joint positions [T, {template.num_joints}, 3], got {positions.shape}")
    parents = np.array(template.parents[1:])
    lengths = np.median(np.linalg.norm(positions[:, 1:] - positions[:, parents], axis=2), axis=0)
    directions = template.offsets[1:] / template.bone_lengths()[:, None]
    offsets = np.zeros_like(template.offsets)
    offsets[1:] = directions * lengths[:, None]
    return template.with_offsets(offsets)


__all__ = [
    "JOINT_NAMES", "PARENTS", "NUM_JOINTS", "NUM_BONES", "ROOT", "JOINT_INDEX", "END_EFFECTORS",
    "TEMPLATE_OFFSETS", "LEG_CHAINS", "Skeleton", "BoneRatios", "canonical_joint_name",
    "canonical_skeleton", "average_skeleton", "bone_ratios", "apply_ratios", "align_motion",
    "fit_skeleton",
]
