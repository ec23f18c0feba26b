"""Procedural BVH motions on randomised skeletons for desk-scale runs."""

import math
import os
from typing import List, Tuple

import numpy as np
from scipy.spatial.transform import Rotation as R
from transformers.utils import logging

from ..errors import SequenceTooShortError
from .bvh import DEFAULT_SCALE, motion_to_bvh, save_bvh
from .kinematics import fk_positions
from .skeleton import JOINT_INDEX, NUM_JOINTS, TEMPLATE_OFFSETS, Skeleton, canonical_skeleton

logger = logging.get_logger(__name__)

FRAME_TIME = 1.0 / 30.0
BONE_JITTER = 0.15

# (joint, axis, amplitude in degrees) for the periodic swings
_SWINGS = [
    ("left_hip", "X", 25.0), ("right_hip", "X", 25.0),
    ("left_knee", "X", 20.0), ("right_knee", "X", 20.0),
    ("left_ankle", "X", 10.0), ("right_ankle", "X", 10.0),
    ("spine1", "Y", 5.0), ("spine2", "X", 5.0), ("spine3", "Z", 5.0),
    ("neck", "Y", 8.0), ("head", "X", 6.0),
    ("left_shoulder", "Z", 20.0), ("right_shoulder", "Z", 20.0),
    ("left_shoulder", "X", 20.0), ("right_shoulder", "X", 20.0),
    ("left_elbow", "Y", 20.0), ("right_elbow", "Y", 20.0),
    ("left_wrist", "Z", 10.0), ("right_wrist", "Z", 10.0),
]
_AXES = {"Z": 0, "X": 1, "Y": 2}


def random_skeleton(rng: np.random.Generator) -> Skeleton:
    """Template skeleton with every bone scaled independently within +/-15%."""
    scales = rng.uniform(1.0 - BONE_JITTER, 1.0 + BONE_JITTER, size=NUM_JOINTS)
    scales[0] = 1.0
    return canonical_skeleton(TEMPLATE_OFFSETS * scales[:, None])


def generate_motion(rng: np.random.Generator, skeleton: Skeleton, frames: int) -> Tuple[np.ndarray, np.ndarray]:
    """Local quaternions [T, 24, 4] and world root positions [T, 3] of a walk around a circle."""
    t = np.arange(frames) * FRAME_TIME
    gait = rng.uniform(0.4, 1.0)
    euler = np.zeros((frames, NUM_JOINTS, 3))
    for joint, axis, amplitude in _SWINGS:
        j = JOINT_INDEX[joint]
        phase = rng.uniform(0.0, 2.0 * math.pi)
        # right side mirrors the left half a cycle later
        if joint.startswith("right_"):
            phase = phase + math.pi
        scale = rng.uniform(0.6, 1.0)
        euler[:, j, _AXES[axis]] += scale * amplitude * np.sin(2.0 * math.pi * gait * t + phase)

    radius = rng.uniform(0.8, 1.2)
    speed = rng.uniform(0.3, 0.9) * rng.choice([-1.0, 1.0])
    theta = rng.uniform(0.0, 2.0 * math.pi) + speed / radius * t
    heading = np.stack([-np.sin(theta), np.zeros_like(t), np.cos(theta)], axis=1) * np.sign(speed)
    yaw = np.degrees(np.arctan2(heading[:, 0], heading[:, 2]))
    euler[:, 0, _AXES["Y"]] += yaw

    quats = R.from_euler("ZXY", euler.reshape(-1, 3), degrees=True).as_quat()[:, [3, 0, 1, 2]]
    rotations = quats.reshape(frames, NUM_JOINTS, 4)
    rotations = np.where(rotations[..., :1] < 0, -rotations, rotations)

    rest = fk_positions(skeleton.parents, skeleton.offsets, np.tile([1.0, 0.0, 0.0, 0.0], (NUM_JOINTS, 1)), np.zeros(3))
    height = -rest[:, 1].min()
    bob = 0.02 * np.sin(4.0 * math.pi * gait * t)
    root = np.stack([radius * np.cos(theta), height + bob, radius * np.sin(theta)], axis=1)
    return rotations, root


def synthesize(n_sequences: int, frames: int, seed: int, out_dir: str,
               scale: float = DEFAULT_SCALE) -> List[str]:
    """Write ``synth_XXX.bvh`` files; identical arguments produce identical files."""
    if frames < 32:
        raise SequenceTooShortError(f"synthetic sequences need at least 32 frames, got {frames}")
    os.makedirs(out_dir, exist_ok=True)
    children = np.random.SeedSequence(seed).spawn(n_sequences)
    paths = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        skeleton = random_skeleton(rng)
        rotations, root = generate_motion(rng, skeleton, frames)
        path = os.path.join(out_dir, f"synth_{i:03d}.bvh")
        save_bvh(path, motion_to_bvh(skeleton, rotations, root, FRAME_TIME), scale=scale)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} synthetic sequences to {out_dir}")
    return paths


__all__ = ["random_skeleton", "generate_motion", "synthesize", "FRAME_TIME"]
