"""Rotation conversions, forward kinematics and per-frame differences.

Quaternions are stored scalar-first ``(w, x, y, z)`` and kept in the
canonical half-space ``w >= 0``. 6D rotations are the first two columns of
the rotation matrix, column-major: ``(m00, m10, m20, m01, m11, m21)``.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation as R

from ..errors import DegenerateInputError, ShapeError

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])
IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


# quaternion helpers --------------------------------------------------------

def quat_canonical(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., :1] < 0, -q, q)


def _to_scipy(q: np.ndarray) -> R:
    return R.from_quat(np.asarray(q, dtype=np.float64).reshape(-1, 4)[:, [1, 2, 3, 0]])


def _from_scipy(rot: R, shape: Tuple[int, ...]) -> np.ndarray:
    q = rot.as_quat().reshape(-1, 4)[:, [3, 0, 1, 2]]
    return quat_canonical(q).reshape(shape + (4,))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return _to_scipy(q).as_matrix().reshape(q.shape[:-1] + (3, 3))


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return _from_scipy(R.from_matrix(m.reshape(-1, 3, 3)), m.shape[:-2])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a * b`` (apply ``b`` first, then ``a``)."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    shape = a.shape[:-1]
    return _from_scipy(_to_scipy(a) * _to_scipy(b), shape)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", quat_to_matrix(q), v)


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle in radians of the relative rotation between quaternions ``a`` and ``b``."""
    a, b = quat_canonical(a), quat_canonical(b)
    b = np.where(np.sum(a * b, axis=-1, keepdims=True) < 0, -b, b)
    return 4.0 * np.arctan2(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))


def euler_to_quat(angles_deg: np.ndarray, order: str) -> np.ndarray:
    """Intrinsic rotation applying axes in ``order`` (e.g. ``"ZXY"`` from BVH channel order)."""
    angles = np.asarray(angles_deg, dtype=np.float64)
    return _from_scipy(R.from_euler(order.upper(), angles.reshape(-1, 3), degrees=True), angles.shape[:-1])


def quat_to_euler(q: np.ndarray, order: str) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return _to_scipy(q).as_euler(order.upper(), degrees=True).reshape(q.shape[:-1] + (3,))


# 6D representation ----------------------------------------------------------

def matrix_to_6d(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def sixd_to_matrix(d: np.ndarray) -> np.ndarray:
    """Gram-Schmidt the two stored columns into a rotation matrix."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape[-1] != 6:
        raise ShapeError(f"6D rotations need a trailing dimension of 6, got {d.shape}")
    a, b = d[..., :3], d[..., 3:]
    a_norm = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(a_norm < 1e-12):
        raise DegenerateInputError("first 6D column has zero length")
    c1 = a / a_norm
    b_orth = b - np.sum(c1 * b, axis=-1, keepdims=True) * c1
    b_norm = np.linalg.norm(b_orth, axis=-1, keepdims=True)
    if np.any(b_norm < 1e-12):
        raise DegenerateInputError("6D columns are parallel")
    c2 = b_orth / b_norm
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=-1)


def rot_to_6d(q: np.ndarray) -> np.ndarray:
    return matrix_to_6d(quat_to_matrix(q))


def six_d_to_rot(d: np.ndarray) -> np.ndarray:
    return matrix_to_quat(sixd_to_matrix(d))


# forward kinematics ---------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    """Per-joint local rotations (quaternions, [J, 4]) and the root position (meters)."""

    rotations: np.ndarray
    root_position: np.ndarray


def fk_global(parents: Sequence[int], offsets: np.ndarray, local_mats: np.ndarray,
              root_positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Global joint positions [..., J, 3] and rotation matrices [..., J, 3, 3].

    ``parents`` must be topologically ordered (parent index below child index).
    The root's offset is ignored; its position is ``root_positions``.
    """
    local_mats = np.asarray(local_mats, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    J = len(parents)
    if local_mats.shape[-3:] != (J, 3, 3):
        raise ShapeError(f"expected local rotations [..., {J}, 3, 3], got {local_mats.shape}")
    lead = local_mats.shape[:-3]
    positions = np.zeros(lead + (J, 3))
    globals_ = np.zeros(lead + (J, 3, 3))
    for j, parent in enumerate(parents):
        if parent < 0:
            globals_[..., j, :, :] = local_mats[..., j, :, :]
            positions[..., j, :] = root_positions
            continue
        parent_rot = globals_[..., parent, :, :]
        globals_[..., j, :, :] = parent_rot @ local_mats[..., j, :, :]
        positions[..., j, :] = positions[..., parent, :] + parent_rot @ offsets[j]
    return positions, globals_


def fk_positions(parents: Sequence[int], offsets: np.ndarray, rotations: np.ndarray,
                 root_positions: np.ndarray) -> np.ndarray:
    """FK from quaternion rotations [..., J, 4]."""
    return fk_global(parents, offsets, quat_to_matrix(rotations), root_positions)[0]


def forward_kinematics(skeleton, pose: Pose) -> np.ndarray:
    """Global joint positions of ``pose`` on ``skeleton`` (anything with ``parents`` and ``offsets``)."""
    return fk_positions(skeleton.parents, skeleton.offsets, pose.rotations, pose.root_position)


# differences ----------------------------------------------------------------

def finite_differences(sequence: np.ndarray, frame_time: float = None) -> np.ndarray:
    """Per-frame deltas along axis 0 with a zero first frame.

    ``frame_time`` is accepted for symmetry with the motion files but deltas are
    not divided by it.
    """
    x = np.asarray(sequence, dtype=np.float64)
    if x.shape[0] < 1:
        raise ShapeError("finite_differences needs at least one frame")
    vel = np.zeros_like(x)
    vel[1:] = x[1:] - x[:-1]
    return vel


def second_differences(sequence: np.ndarray) -> np.ndarray:
    """Accelerations with ``acc_0 = acc_1 = 0``."""
    x = np.asarray(sequence, dtype=np.float64)
    acc = np.zeros_like(x)
    if x.shape[0] >= 3:
        acc[2:] = (x[2:] - x[1:-1]) - (x[1:-1] - x[:-2])
    return acc


__all__ = [
    "IDENTITY_QUAT", "IDENTITY_6D", "Pose",
    "quat_canonical", "quat_to_matrix", "matrix_to_quat", "quat_multiply", "quat_rotate",
    "geodesic_angle", "euler_to_quat", "quat_to_euler",
    "matrix_to_6d", "sixd_to_matrix", "rot_to_6d", "six_d_to_rot",
    "fk_global", "fk_positions", "forward_kinematics", "finite_differences", "second_differences",
]
