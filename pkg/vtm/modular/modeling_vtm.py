import os
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from transformers.utils import logging

from ..autodiff.tensor import Tensor, no_grad
from ..errors import ConfigError, DatasetError, ShapeError
from ..metrics import MetricsReport, evaluate_motion, mean_report
from ..processor.camera import Camera, project, recover_root_translation, to_world_space
from ..processor.kinematics import finite_differences, fk_positions, matrix_to_quat, quat_to_matrix, six_d_to_rot
from ..processor.representation import (
    CANONICAL_PARTITION,
    POSITION,
    ROOT_DEPTH,
    ROOT_OUTPUT_CHANNELS,
    ROT6D,
    VELOCITY,
    BodyPartition,
    KeypointNormalizer,
    KeypointSequence,
    MotionNormalizer,
    TrainingWindow,
    motion_positions_from_rotations,
    split_parts,
)
from ..processor.skeleton import NUM_JOINTS, ROOT, BoneRatios, Skeleton, apply_ratios
from .configuration_vtm import TpveConfig, VtmConfig
from .modeling_tpmae import TensorLike, TpmaeModel, TpmaeOutput, VtmPreTrainedModel
from .modeling_tpve import TpveModel, TpveOutput

logger = logging.get_logger(__name__)

FEATURE_MODES = ("zeros", "file")


@dataclass
class VtmOutput:
    """Outputs of one joint pass.

    ``motion`` is the auto-encoder pass on the 3D motion; ``visual`` the visual
    encoder pass on the keypoints; ``non_root``/``root`` are the motion
    decoders applied to the visual latents.
    """
    motion: Optional[TpmaeOutput]
    visual: TpveOutput
    non_root: Tensor
    root: Tensor


class VtmModel(VtmPreTrainedModel):
    """Visual encoder trained onto the latent space of a pre-trained motion auto-encoder.

    At inference time the motion encoders are unused: keypoints go through the
    visual encoder and the motion decoders turn its latents into motion.
    """
    config_class = VtmConfig
    base_model_prefix = "vtm"

    def __init__(self, config: VtmConfig, seed: int = 0):
        super().__init__(config, seed)
        self.tpmae = TpmaeModel(config.tpmae_config, seed)
        self.tpve = TpveModel(config.tpve_config, seed)

    @classmethod
    def from_tpmae(cls, tpmae: TpmaeModel, tpve_config: Optional[TpveConfig] = None, seed: int = 0) -> "VtmModel":
        """Fresh visual encoder around a copy of a trained auto-encoder."""
        config = VtmConfig(tpmae_config=tpmae.config, tpve_config=tpve_config or TpveConfig())
        model = cls(config, seed)
        model.tpmae.load_state_dict(tpmae.state_dict())
        return model

    def predict(self, key_upper: TensorLike, key_lower: TensorLike,
                features: Optional[TensorLike] = None) -> Tuple[TpveOutput, Tensor, Tensor]:
        visual = self.tpve(key_upper, key_lower, features)
        non_root, root = self.tpmae.decode(visual.upper_latents, visual.lower_latents)
        return visual, non_root, root

    def forward(self, motion_upper: Optional[TensorLike], motion_lower: Optional[TensorLike],
                key_upper: TensorLike, key_lower: TensorLike, features: Optional[TensorLike] = None) -> VtmOutput:
        motion = None if motion_upper is None else self.tpmae(motion_upper, motion_lower)
        visual, non_root, root = self.predict(key_upper, key_lower, features)
        return VtmOutput(motion=motion, visual=visual, non_root=non_root, root=root)


# ----------------------------------------------------------------------------
# data plumbing between the prepared representation and the networks


@dataclass(eq=False)
class FeatureProvider:
    """Per-frame visual features fed next to the keypoints.

    ``zeros`` supplies all-zero [T, feature_dim] arrays (the keypoints-only
    path); ``file`` serves arrays loaded from ``<sequence_id>.npy`` files.
    """
    mode: str = "zeros"
    feature_dim: int = 512
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ConfigError(f"feature mode must be one of {FEATURE_MODES}, got {self.mode!r}")
        for sid, arr in self.arrays.items():
            if np.ndim(arr) != 2 or np.shape(arr)[1] != self.feature_dim:
                raise ShapeError(f"features of {sid} must be [T, {self.feature_dim}], got {np.shape(arr)}")

    @classmethod
    def from_directory(cls, directory: str, feature_dim: int,
                       sequence_ids: Optional[Sequence[str]] = None) -> "FeatureProvider":
        if sequence_ids is None:
            sequence_ids = sorted(os.path.splitext(n)[0] for n in os.listdir(directory) if n.endswith(".npy"))
        arrays = {}
        for sid in sequence_ids:
            path = os.path.join(directory, f"{sid}.npy")
            if not os.path.exists(path):
                raise DatasetError(f"no feature file for sequence {sid} in {directory}")
            arrays[sid] = np.load(path).astype(np.float64)
        logger.info(f"Loaded features for {len(arrays)} sequences from {directory}")
        return cls("file", feature_dim, arrays)

    @property
    def is_zero(self) -> bool:
        return self.mode == "zeros"

    def for_sequence(self, sequence_id: str, num_frames: int, offset: int = 0) -> np.ndarray:
        if self.is_zero:
            return np.zeros((num_frames, self.feature_dim))
        if sequence_id not in self.arrays:
            raise DatasetError(f"no features for sequence {sequence_id!r}")
        arr = self.arrays[sequence_id]
        if offset + num_frames > arr.shape[0]:
            raise ShapeError(f"features of {sequence_id} cover {arr.shape[0]} frames, need {offset + num_frames}")
        return arr[offset:offset + num_frames]


@dataclass
class MotionBatch:
    """Normalised network inputs and targets of a batch of windows (all numpy, time-major)."""
    motion_upper: np.ndarray
    motion_lower: np.ndarray
    target_root: np.ndarray
    target_non_root: np.ndarray
    key_upper: Optional[np.ndarray] = None
    key_lower: Optional[np.ndarray] = None
    bone_ratios: Optional[np.ndarray] = None
    features: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.motion_upper.shape[0]

    def select(self, index) -> "MotionBatch":
        pick = lambda a: None if a is None else a[index]
        return MotionBatch(*(pick(getattr(self, name)) for name in self.__dataclass_fields__))


def motion_targets(frames: np.ndarray, partition: BodyPartition = CANONICAL_PARTITION):
    """Split normalised frames [..., T, 24, 12] into encoder inputs and decoder targets."""
    upper, lower = split_parts(frames, partition)
    return upper, lower, frames[..., ROOT, list(ROOT_OUTPUT_CHANNELS)], frames[..., ROOT + 1:, :]


def build_batch(windows: Sequence[TrainingWindow], motion_norm: MotionNormalizer,
                keypoint_norm: Optional[KeypointNormalizer] = None, features: Optional[FeatureProvider] = None,
                partition: BodyPartition = CANONICAL_PARTITION) -> MotionBatch:
    frames = motion_norm.normalize(np.stack([w.motion.frames for w in windows]))
    upper, lower, target_root, target_non_root = motion_targets(frames, partition)
    batch = MotionBatch(upper, lower, target_root, target_non_root)
    if keypoint_norm is not None:
        keys = keypoint_norm.normalize(np.stack([w.keypoints.frames for w in windows]))
        batch.key_upper, batch.key_lower = split_parts(keys, partition)
        batch.bone_ratios = np.stack([w.bone_ratios.ratios for w in windows])
        if features is not None and not features.is_zero:
            batch.features = np.stack([
                w.features if w.features is not None
                else features.for_sequence(w.sequence_id, w.motion.num_frames, w.offset)
                for w in windows
            ])
    return batch


def assemble_frames(root: np.ndarray, non_root: np.ndarray) -> np.ndarray:
    """Normalised [T, 24, 12] frames from the root head [T, 8] and non-root rows [T, 23, 12].

    Root channels the head does not predict are left at zero (the mean).
    """
    frames = np.zeros((root.shape[0], NUM_JOINTS, non_root.shape[-1]))
    frames[:, ROOT, list(ROOT_OUTPUT_CHANNELS)] = root
    frames[:, ROOT + 1:] = non_root
    return frames


# ----------------------------------------------------------------------------
# bundles: a model plus everything needed to interpret its inputs and outputs


@dataclass(eq=False)
class VtmBundle:
    kind: str
    model: Union[TpmaeModel, VtmModel]
    motion_normalizer: MotionNormalizer
    keypoint_normalizer: KeypointNormalizer
    virtual: Skeleton
    partition: BodyPartition = CANONICAL_PARTITION
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("tpmae", "vtm"):
            raise ConfigError(f"unknown bundle kind {self.kind!r}")
        c = self.tpmae.config
        if (self.partition.num_upper, self.partition.num_lower) != (c.upper_joints, c.lower_joints):
            raise ShapeError(f"partition sizes ({self.partition.num_upper}, {self.partition.num_lower}) "
                             f"disagree with the model ({c.upper_joints}, {c.lower_joints})")

    @property
    def tpmae(self) -> TpmaeModel:
        return self.model if self.kind == "tpmae" else self.model.tpmae


def edge_pad(x: np.ndarray, multiple: int) -> np.ndarray:
    """Repeat the last frame until the length is a multiple of ``multiple``."""
    missing = (-x.shape[0]) % multiple
    if not missing:
        return x
    return np.pad(x, [(0, missing)] + [(0, 0)] * (x.ndim - 1), mode="edge")


@dataclass(eq=False)
class Reconstruction:
    """Motion recovered from keypoints, in camera space.

    ``rotations`` are local quaternions [T, 24, 4] whose root entry is the
    camera-space global root rotation; ``root_translations`` [T, 3].
    """
    skeleton: Skeleton
    rotations: np.ndarray
    root_translations: np.ndarray
    frames: np.ndarray
    bone_ratios: BoneRatios

    @property
    def num_frames(self) -> int:
        return self.rotations.shape[0]

    def joint_positions(self) -> np.ndarray:
        return fk_positions(self.skeleton.parents, self.skeleton.offsets, self.rotations, self.root_translations)

    def to_world(self, cam: Camera) -> Tuple[np.ndarray, np.ndarray]:
        """Rotations and root positions with the camera extrinsics undone."""
        mats = quat_to_matrix(self.rotations)
        mats[:, ROOT] = cam.rotation_matrix.T @ mats[:, ROOT]
        return matrix_to_quat(mats), to_world_space(self.root_translations, cam)

    def root_track_csv(self) -> str:
        lines = ["frame,x,y,z"]
        lines += [f"{i},{x:.6f},{y:.6f},{z:.6f}" for i, (x, y, z) in enumerate(self.root_translations)]
        return "\n".join(lines) + "\n"


def reconstruct(keypoints: KeypointSequence, bundle: VtmBundle, cam: Camera,
                features: Optional[np.ndarray] = None) -> Reconstruction:
    """Skeleton, per-frame rotations and camera-space root translations from 2D keypoints.

    Sequences whose length is not a multiple of the temporal stride are
    edge-padded for the forward pass and trimmed afterwards. Bundles trained
    with ``zero_keypoints`` see all-zero keypoints and rely on ``features``.
    """
    if bundle.kind != "vtm":
        raise ConfigError(f"reconstruction needs a trained vtm bundle, got {bundle.kind}")
    model: VtmModel = bundle.model
    stride = model.tpmae.config.temporal_stride
    T = keypoints.num_frames
    keys = edge_pad(bundle.keypoint_normalizer.normalize(keypoints.frames), stride)
    key_upper, key_lower = split_parts(keys, bundle.partition)
    if bundle.metadata.get("zero_keypoints"):
        if features is None:
            raise ConfigError("this model was trained on frame features alone and needs features")
        # the root keypoint still anchors the translation below
        key_upper, key_lower = np.zeros_like(key_upper), np.zeros_like(key_lower)
    feats = None
    if features is not None:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[0] != T:
            raise ShapeError(f"features cover {features.shape[0]} frames, keypoints {T}")
        feats = edge_pad(features, stride)[None]

    with no_grad():
        visual, non_root, root = model.predict(key_upper[None], key_lower[None], feats)
    frames = bundle.motion_normalizer.denormalize(assemble_frames(root.data[0, :T], non_root.data[0, :T]))

    rotations = six_d_to_rot(frames[..., ROT6D])
    root_translations = recover_root_translation(keypoints.frames[:, ROOT, :2], frames[:, ROOT, ROOT_DEPTH], cam)
    frames[:, ROOT, POSITION] = root_translations
    frames[:, ROOT, VELOCITY] = finite_differences(root_translations)
    ratios = BoneRatios(visual.bone_ratios.data[0])
    return Reconstruction(apply_ratios(bundle.virtual, ratios), rotations, root_translations, frames, ratios)


def tpmae_reconstruct(windows: Sequence[TrainingWindow], bundle: VtmBundle) -> np.ndarray:
    """Denormalised [N, T, 24, 12] frames decoded from the motion priors of each window."""
    batch = build_batch(windows, bundle.motion_normalizer, partition=bundle.partition)
    with no_grad():
        out = bundle.tpmae(batch.motion_upper, batch.motion_lower)
    return np.stack([
        bundle.motion_normalizer.denormalize(assemble_frames(out.root.data[i], out.non_root.data[i]))
        for i in range(batch.size)
    ])


def evaluate_tpmae_reconstruction(windows: Sequence[TrainingWindow], bundle: VtmBundle, cam: Camera,
                                  skeletons: Optional[Dict[str, Skeleton]] = None) -> MetricsReport:
    """Metrics of auto-encoded windows on the virtual skeleton.

    Joint positions come from forward kinematics of the decoded rotations; the
    root is back-projected from the true root keypoint at the decoded depth.
    Passing ``skeletons`` evaluates each window on its character's own
    skeleton instead, for motion prepared without alignment.
    """
    decoded = tpmae_reconstruct(windows, bundle)
    reports, weights = [], []
    for window, frames in zip(windows, decoded):
        gt = window.motion.frames
        skeleton = bundle.virtual if skeletons is None else skeletons[window.motion.skeleton_id]
        uv = project(gt[:, ROOT, POSITION], cam)
        frames[:, ROOT, POSITION] = recover_root_translation(uv, frames[:, ROOT, ROOT_DEPTH], cam)
        pred_positions = motion_positions_from_rotations(frames, skeleton)
        gt_positions = motion_positions_from_rotations(gt, skeleton)
        reports.append(evaluate_motion(pred_positions, gt_positions, skeleton, skeleton))
        weights.append(window.motion.num_frames)
    return mean_report(reports, weights)


def evaluate_vtm_reconstruction(windows: Sequence[TrainingWindow], bundle: VtmBundle, cam: Camera,
                                skeletons: Dict[str, Skeleton],
                                features: Optional[FeatureProvider] = None) -> MetricsReport:
    """Metrics of keypoint reconstructions against each character's own skeleton and motion."""
    reports, weights = [], []
    for window in windows:
        feats = None
        if features is not None and not features.is_zero:
            feats = features.for_sequence(window.sequence_id, window.motion.num_frames, window.offset)
        rec = reconstruct(window.keypoints, bundle, cam, feats)
        gt_skeleton = skeletons[window.motion.skeleton_id]
        gt_positions = motion_positions_from_rotations(window.motion.frames, gt_skeleton)
        reports.append(evaluate_motion(rec.joint_positions(), gt_positions, rec.skeleton, gt_skeleton))
        weights.append(window.motion.num_frames)
    return mean_report(reports, weights)


__all__ = [
    "VtmModel", "VtmOutput", "FeatureProvider", "MotionBatch", "VtmBundle", "Reconstruction",
    "motion_targets", "build_batch", "assemble_frames", "edge_pad", "reconstruct", "tpmae_reconstruct",
    "evaluate_tpmae_reconstruction", "evaluate_vtm_reconstruction", "FEATURE_MODES",
]
