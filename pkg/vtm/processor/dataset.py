"""On-disk dataset: binary per-sequence records plus a JSON manifest.

Layout of a prepared dataset directory::

    manifest.json
    virtual_skeleton.txt          averaged skeleton table
    camera.txt                    camera used for projection
    skeletons/<id>.txt            each character's own skeleton
    motion/<id>.vtmd              [T, 24, 12] camera-space motion on the virtual skeleton
    keypoints/<id>.vtmd           [T, 24, 4] virtual 2D keypoints
    gt/<id>.bvh                   character skeleton with the training motion, world space

With ``align_skeletons`` off the motion records keep each character's own
skeleton and root trajectory instead of the averaged one.

A record starts with the header ``<4sIIII`` (magic ``VTMD``, version, T, J, C)
followed by T*J*C little-endian float32 values.
"""

import json
import os
import struct
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from transformers.utils import logging

from ..errors import DatasetError, VtmError
from .bvh import DEFAULT_SCALE, load_bvh, motion_from_bvh, motion_to_bvh, save_bvh
from .camera import Camera, load_camera, save_camera
from .representation import (
    KeypointSequence,
    MotionSequence,
    PreparedSequence,
    TrainingWindow,
    build_motion_sequence,
    make_windows,
    project_keypoints,
)
from .skeleton import BoneRatios, Skeleton, align_motion, average_skeleton, bone_ratios

logger = logging.get_logger(__name__)

RECORD_MAGIC = b"VTMD"
RECORD_VERSION = 1
_HEADER = struct.Struct("<4sIIII")
MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "vtm-dataset"
MANIFEST_VERSION = 1


def write_record(path: str, frames: np.ndarray):
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise DatasetError(f"records hold [T, J, C] arrays, got shape {frames.shape}")
    T, J, C = frames.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(RECORD_MAGIC, RECORD_VERSION, T, J, C))
        f.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_record(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise DatasetError(f"{path}: truncated record header")
    magic, version, T, J, C = _HEADER.unpack_from(blob)
    if magic != RECORD_MAGIC:
        raise DatasetError(f"{path}: bad magic {magic!r}")
    if version != RECORD_VERSION:
        raise DatasetError(f"{path}: record version {version}, expected {RECORD_VERSION}")
    expected = _HEADER.size + 4 * T * J * C
    if len(blob) != expected:
        raise DatasetError(f"{path}: {len(blob)} bytes, header implies {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return data.reshape(T, J, C).astype(np.float64)


@dataclass(eq=False)
class Dataset:
    root: str
    virtual: Skeleton
    camera: Camera
    sequences: List[PreparedSequence]
    skeletons: Dict[str, Skeleton]
    manifest: dict

    def windows(self, window: int = 32, stride: int = 4) -> List[TrainingWindow]:
        return make_windows(self.sequences, window=window, stride=stride)

    @property
    def aligned(self) -> bool:
        return bool(self.manifest.get("align_skeletons", True))

    def gt_bvh_path(self, sequence_id: str) -> str:
        return os.path.join(self.root, "gt", f"{sequence_id}.bvh")


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def load_dataset(root: str) -> Dataset:
    manifest_path = os.path.join(root, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise DatasetError(f"{root} has no {MANIFEST_NAME}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != MANIFEST_FORMAT or manifest.get("version") != MANIFEST_VERSION:
        raise DatasetError(f"unsupported manifest {manifest.get('format')!r} v{manifest.get('version')}")
    virtual = Skeleton.from_text(_read_text(os.path.join(root, manifest["virtual_skeleton"])))
    camera = load_camera(os.path.join(root, manifest["camera"]))

    sequences, skeletons = [], {}
    for entry in manifest["sequences"]:
        sid = entry["id"]
        motion = read_record(os.path.join(root, entry["motion"]))
        keypoints = read_record(os.path.join(root, entry["keypoints"]))
        if motion.shape[0] != entry["frames"] or keypoints.shape[0] != entry["frames"]:
            raise DatasetError(f"sequence {sid}: record lengths disagree with the manifest")
        skeletons[entry["skeleton_id"]] = Skeleton.from_text(_read_text(os.path.join(root, entry["skeleton"])))
        sequences.append(PreparedSequence(
            sequence_id=sid,
            motion=MotionSequence(motion, entry["skeleton_id"], entry["camera_id"]),
            keypoints=KeypointSequence(keypoints),
            bone_ratios=BoneRatios(np.array(entry["bone_ratios"])),
        ))
    logger.info(f"Loaded {len(sequences)} sequences from {root}")
    return Dataset(root, virtual, camera, sequences, skeletons, manifest)


def prepare_dataset(bvh_paths: Sequence[str], cam: Camera, out_dir: str,
                    scale: float = DEFAULT_SCALE, align_skeletons: bool = True) -> Dataset:
    """Average the skeletons, align every motion to the average and write the dataset.

    With ``align_skeletons=False`` each motion stays on its own skeleton; the
    averaged skeleton and the bone ratios are still written.

    Files that fail to parse or map onto the joint table are logged and
    skipped; the run fails only when none succeed. Output is byte-identical
    for identical inputs.
    """
    loaded: List[Tuple[str, str, np.ndarray, np.ndarray, Skeleton, float]] = []
    for path in sorted(bvh_paths):
        sid = os.path.splitext(os.path.basename(path))[0]
        try:
            doc = load_bvh(path, scale=scale)
            rotations, root_positions, skeleton = motion_from_bvh(doc)
        except (VtmError, OSError) as e:
            logger.warning(f"Skipping {path}: {e}")
            continue
        loaded.append((sid, os.path.basename(path), rotations, root_positions, skeleton, doc.frame_time))
    if not loaded:
        raise DatasetError("no BVH file could be prepared")
    ids = [item[0] for item in loaded]
    if len(set(ids)) != len(ids):
        raise DatasetError("BVH file names must be unique")

    virtual = average_skeleton([item[4] for item in loaded])
    for sub in ("motion", "keypoints", "skeletons", "gt"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    _write_text(os.path.join(out_dir, "virtual_skeleton.txt"), virtual.to_text())
    save_camera(os.path.join(out_dir, "camera.txt"), cam)

    entries = []
    for sid, source, rotations, root_positions, skeleton, frame_time in loaded:
        ratios = bone_ratios(skeleton, virtual)
        if align_skeletons:
            rotations, root_positions = align_motion(rotations, root_positions, skeleton, virtual)
        motion = build_motion_sequence(rotations, root_positions, virtual if align_skeletons else skeleton, cam,
                                       skeleton_id=sid, camera_id=cam.name)
        keypoints = project_keypoints(motion, cam)
        write_record(os.path.join(out_dir, "motion", f"{sid}.vtmd"), motion.frames)
        write_record(os.path.join(out_dir, "keypoints", f"{sid}.vtmd"), keypoints.frames)
        _write_text(os.path.join(out_dir, "skeletons", f"{sid}.txt"), skeleton.to_text())
        save_bvh(os.path.join(out_dir, "gt", f"{sid}.bvh"),
                 motion_to_bvh(skeleton, rotations, root_positions, frame_time), scale=scale)
        entries.append({
            "id": sid,
            "source": source,
            "skeleton_id": sid,
            "camera_id": cam.name,
            "frames": motion.num_frames,
            "frame_time": frame_time,
            "bone_ratios": [float(r) for r in ratios.ratios],
            "motion": f"motion/{sid}.vtmd",
            "keypoints": f"keypoints/{sid}.vtmd",
            "skeleton": f"skeletons/{sid}.txt",
            "gt_bvh": f"gt/{sid}.bvh",
        })
        logger.info(f"Prepared {sid}: {motion.num_frames} frames{'' if align_skeletons else ' (own skeleton)'}")

    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "scale": scale,
        "align_skeletons": bool(align_skeletons),
        "virtual_skeleton": "virtual_skeleton.txt",
        "camera": "camera.txt",
        "sequences": entries,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return load_dataset(out_dir)


__all__ = ["Dataset", "write_record", "read_record", "load_dataset", "prepare_dataset"]
