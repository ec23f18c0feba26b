"""Pinhole camera without lens distortion.

``p_cam = R p_world + t``; camera axes are x right, y down, z forward.
"""

from dataclasses import dataclass

import numpy as np
from transformers.utils import logging

from ..errors import BehindCameraError, ConfigError, NonPositiveDepthError
from ..kvtext import coerce, format_kv, parse_kv
from .kinematics import quat_canonical, quat_to_matrix

logger = logging.get_logger(__name__)

MIN_DEPTH = 1e-6
_REQUIRED_KEYS = ("fx", "fy", "cx", "cy", "rotation", "translation")


@dataclass(frozen=True, eq=False)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = None
    translation: np.ndarray = None
    name: str = "camera"
    width: int = 1920
    height: int = 1080

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"image size must be positive, got {self.width}x{self.height}")
        rotation = np.array([1.0, 0.0, 0.0, 0.0] if self.rotation is None else self.rotation, dtype=np.float64)
        translation = np.zeros(3) if self.translation is None else np.array(self.translation, dtype=np.float64)
        rotation = quat_canonical(rotation.reshape(4))
        for arr in (rotation, translation):
            arr.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation.reshape(3))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def to_text(self) -> str:
        return format_kv([
            ("name", self.name), ("fx", float(self.fx)), ("fy", float(self.fy)),
            ("cx", float(self.cx)), ("cy", float(self.cy)),
            ("rotation", [float(v) for v in self.rotation]),
            ("translation", [float(v) for v in self.translation]),
            ("width", int(self.width)), ("height", int(self.height)),
        ], header="vtm camera (rotation is a w x y z quaternion, world to camera)")

    @classmethod
    def from_text(cls, text: str) -> "Camera":
        values = parse_kv(text)
        missing = [k for k in _REQUIRED_KEYS if k not in values]
        if missing:
            raise ConfigError(f"camera file lacks {missing}")
        unknown = set(values) - set(_REQUIRED_KEYS) - {"name", "width", "height"}
        if unknown:
            raise ConfigError(f"unknown camera keys {sorted(unknown)}")
        return cls(
            fx=coerce(values["fx"], 0.0, "fx"), fy=coerce(values["fy"], 0.0, "fy"),
            cx=coerce(values["cx"], 0.0, "cx"), cy=coerce(values["cy"], 0.0, "cy"),
            rotation=np.array(coerce(values["rotation"], (0.0,) * 4, "rotation")),
            translation=np.array(coerce(values["translation"], (0.0,) * 3, "translation")),
            name=values.get("name", "camera"),
            width=coerce(values.get("width", "1920"), 0, "width"),
            height=coerce(values.get("height", "1080"), 0, "height"),
        )


def default_camera() -> Camera:
    """Camera 6 m in front of the origin at hip height, looking back along -Z of a Y-up world."""
    return Camera(fx=1100.0, fy=1100.0, cx=960.0, cy=540.0, rotation=np.array([0.0, 1.0, 0.0, 0.0]),
                  translation=np.array([0.0, 0.9, 6.0]), name="synth_front")


def load_camera(path: str) -> Camera:
    with open(path, "r", encoding="utf-8") as f:
        return Camera.from_text(f.read())


def save_camera(path: str, cam: Camera):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(cam.to_text())


def to_camera_space(points: np.ndarray, cam: Camera) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points @ cam.rotation_matrix.T + cam.translation


def to_world_space(points: np.ndarray, cam: Camera) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return (points - cam.translation) @ cam.rotation_matrix


def project(points: np.ndarray, cam: Camera) -> np.ndarray:
    """Pixel coordinates of camera-space ``points`` [..., 3]."""
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    if np.any(z <= MIN_DEPTH):
        raise BehindCameraError(f"{int(np.sum(z <= MIN_DEPTH))} point(s) at or behind the camera plane")
    u = cam.fx * points[..., 0] / z + cam.cx
    v = cam.fy * points[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1)


def recover_root_translation(root_uv: np.ndarray, root_z: np.ndarray, cam: Camera) -> np.ndarray:
    """Back-project pixel ``root_uv`` [..., 2] at depth ``root_z`` [...] into camera space."""
    root_uv = np.asarray(root_uv, dtype=np.float64)
    z = np.asarray(root_z, dtype=np.float64)
    if np.any(z <= 0):
        raise NonPositiveDepthError("root depth must be positive")
    x = (root_uv[..., 0] - cam.cx) * z / cam.fx
    y = (root_uv[..., 1] - cam.cy) * z / cam.fy
    return np.stack([x, y, np.broadcast_to(z, x.shape)], axis=-1)


__all__ = [
    "Camera", "default_camera", "load_camera", "save_camera", "to_camera_space",
    "to_world_space", "project", "recover_root_translation",
]
