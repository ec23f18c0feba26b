"""Training loops for the motion auto-encoder and the joint visual/motion model.

Both loops shuffle fixed-length windows with a seeded generator, run AdamW
with a step-decay learning rate and write one CSV line per epoch. With
``threads > 1`` a batch is cut into contiguous shards whose gradients are
computed concurrently and summed in shard order.
"""

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm
from transformers.utils import logging

from ..autodiff.nn import Parameter
from ..autodiff.optim import AdamW
from ..autodiff.tensor import Tensor, grad
from ..errors import ConfigError, DatasetError
from ..kvtext import dump_dataclass, load_dataclass, parse_kv
from ..modular.configuration_vtm import TpmaeConfig, TpveConfig
from ..modular.losses import (
    ALIGNMENT_LOSSES,
    JointWeights,
    LossWeights,
    VtmLosses,
    alignment_loss,
    bone_loss,
    motion_rec_loss,
    smoothness_loss,
    tpmae_losses,
    vtm_total_loss,
)
from ..modular.modeling_tpmae import TpmaeModel
from ..modular.modeling_vtm import FEATURE_MODES, FeatureProvider, MotionBatch, VtmBundle, VtmModel, build_batch
from ..processor.dataset import Dataset
from ..processor.representation import KeypointNormalizer, MotionNormalizer, default_partition
from ..schedule.lr_schedule import StepDecaySchedule

logger = logging.get_logger(__name__)

SEED_ENV = "VTM_SEED"
LOG_NAME = "train_log.csv"
TPMAE_COLUMNS = ("L_rec", "L_s")
VTM_COLUMNS = ("L_rec", "L_s", "L_ma", "L_b", "L_pred", "L_s_v")
DEFAULT_BATCH_SIZE = {"tpmae": 100, "vtm": 64}


@dataclass
class TrainingConfig:
    seed: int = 0
    epochs: int = 500
    batch_size: int = 100
    learning_rate: float = 1e-4
    lr_decay: float = 0.5
    lr_decay_every: int = 100
    weight_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    smooth_l1_beta: float = 1.0
    weight_alignment: float = 1.0
    weight_bone: float = 1.0
    weight_prediction: float = 1.0
    weight_smoothness: float = 1.0
    weight_motion: float = 1.0
    window: int = 32
    window_stride: int = 4
    threads: int = 1
    alignment_loss: str = "l1"
    freeze_tpmae_decoders: bool = False
    use_ctca: bool = True
    feature_mode: str = "zeros"
    feature_dim: int = 512
    feature_dir: str = ""
    zero_keypoints: bool = False
    log_every: int = 1

    def __post_init__(self):
        if self.alignment_loss not in ALIGNMENT_LOSSES:
            raise ConfigError(f"alignment_loss must be one of {ALIGNMENT_LOSSES}, got {self.alignment_loss!r}")
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigError(f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}")
        if self.feature_mode == "file" and not self.feature_dir:
            raise ConfigError("feature_mode = file needs feature_dir")
        if self.zero_keypoints and self.feature_mode != "file":
            raise ConfigError("zero_keypoints leaves only frame features and needs feature_mode = file")
        for name in ("epochs", "batch_size", "threads", "log_every", "window", "window_stride", "feature_dim",
                     "lr_decay_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.window % 4:
            raise ConfigError(f"window must be a multiple of 4, got {self.window}")
        for name in ("learning_rate", "lr_decay", "smooth_l1_beta", "eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def for_stage(cls, stage: str, **overrides) -> "TrainingConfig":
        return cls(**{"batch_size": DEFAULT_BATCH_SIZE[stage], **overrides})

    @classmethod
    def from_text(cls, text: str, stage: str = "tpmae", env: Optional[Dict[str, str]] = None) -> "TrainingConfig":
        """Parse ``key = value`` text; the stage picks the default batch size, ``VTM_SEED`` overrides the seed."""
        env = os.environ if env is None else env
        overrides = {}
        if "batch_size" not in parse_kv(text):
            overrides["batch_size"] = DEFAULT_BATCH_SIZE[stage]
        config = load_dataclass(cls, text, **overrides)
        if env.get(SEED_ENV):
            try:
                config = dataclasses.replace(config, seed=int(env[SEED_ENV]))
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
        return config

    @classmethod
    def from_file(cls, path: Optional[str], stage: str = "tpmae") -> "TrainingConfig":
        text = ""
        if path:
            try:
                with open(path, "r", encoding="utf-8") as f:
                    text = f.read()
            except OSError as e:
                raise ConfigError(f"cannot read training config {path}: {e}") from None
        return cls.from_text(text, stage)

    def to_text(self) -> str:
        return dump_dataclass(self, header="vtm training config")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.weight_alignment, self.weight_bone, self.weight_prediction,
                           self.weight_smoothness, self.weight_motion)


@dataclass
class EpochLog:
    epoch: int
    lr: float
    losses: Dict[str, float]

    def csv(self, columns: Sequence[str]) -> str:
        return ",".join([str(self.epoch), repr(self.lr)] + [f"{self.losses[c]:.10g}" for c in columns])


class BaseTrainer:
    """Epoch loop, batching, sharded gradients and logging shared by both stages."""
    stage = ""
    columns: Tuple[str, ...] = ()

    def __init__(self, config: TrainingConfig, data: MotionBatch, params: List[Parameter]):
        self.config = config
        self.data = data
        self.params = params
        self.schedule = StepDecaySchedule(config.learning_rate, config.lr_decay, config.lr_decay_every)
        self.optimizer = AdamW(params, lr=config.learning_rate, betas=config.betas, eps=config.eps,
                               weight_decay=config.weight_decay)
        self.history: List[EpochLog] = []
        self.joint_weights = JointWeights()

    def compute_loss(self, batch: MotionBatch) -> Tuple[Tensor, Dict[str, float]]:
        raise NotImplementedError

    def _shard_gradients(self, shard: MotionBatch, scale: float):
        total, values = self.compute_loss(shard)
        grads = grad(total * scale, self.params)
        return grads, {k: v * scale for k, v in values.items()}

    def step(self, batch: MotionBatch, pool: Optional[ThreadPoolExecutor] = None) -> Dict[str, float]:
        """One optimiser update on ``batch``; returns the batch-mean loss values."""
        n = batch.size
        shards = [idx for idx in np.array_split(np.arange(n), min(self.config.threads, n)) if idx.size]
        jobs = [(batch.select(idx), idx.size / n) for idx in shards]
        if pool is None or len(jobs) == 1:
            results = [self._shard_gradients(s, w) for s, w in jobs]
        else:
            results = list(pool.map(lambda job: self._shard_gradients(*job), jobs))

        grads = [np.array(g) for g in results[0][0]]
        values = dict(results[0][1])
        for shard_grads, shard_values in results[1:]:
            for acc, g in zip(grads, shard_grads):
                acc += g
            for k, v in shard_values.items():
                values[k] += v
        self.optimizer.step(grads)
        return values

    def fit(self, log_path: Optional[str] = None, progress: bool = True) -> List[EpochLog]:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        n = self.data.size
        log_file = None
        if log_path:
            log_file = open(log_path, "w", encoding="utf-8", newline="\n")
            log_file.write(",".join(("epoch", "lr") + self.columns) + "\n")
        pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
        logger.info(f"Training {self.stage} on {n} windows for {cfg.epochs} epochs (batch {cfg.batch_size})")
        try:
            for epoch in tqdm(range(cfg.epochs), desc=f"train-{self.stage}", disable=not progress):
                self.optimizer.lr = self.schedule(epoch)
                order = rng.permutation(n)
                sums = dict.fromkeys(self.columns, 0.0)
                for start in range(0, n, cfg.batch_size):
                    idx = order[start:start + cfg.batch_size]
                    values = self.step(self.data.select(idx), pool)
                    for k in self.columns:
                        sums[k] += values[k] * idx.size
                record = EpochLog(epoch, self.optimizer.lr, {k: v / n for k, v in sums.items()})
                self.history.append(record)
                line = record.csv(self.columns)
                if log_file is not None:
                    log_file.write(line + "\n")
                if epoch % cfg.log_every == 0 or epoch == cfg.epochs - 1:
                    logger.info(line)
        finally:
            if pool is not None:
                pool.shutdown()
            if log_file is not None:
                log_file.close()
        return self.history


def _windows(dataset: Dataset, config: TrainingConfig):
    windows = dataset.windows(config.window, config.window_stride)
    if not windows:
        raise DatasetError(f"dataset {dataset.root} has no sequence of at least {config.window} frames")
    return windows


class TpmaeTrainer(BaseTrainer):
    stage = "tpmae"
    columns = TPMAE_COLUMNS

    def __init__(self, dataset: Dataset, config: TrainingConfig, model_config: Optional[TpmaeConfig] = None):
        self.dataset = dataset
        self.windows = _windows(dataset, config)
        self.motion_normalizer = MotionNormalizer.fit([s.motion.frames for s in dataset.sequences])
        self.model = TpmaeModel(model_config or TpmaeConfig(), seed=config.seed)
        self.partition = default_partition(self.model.config.two_part)
        data = build_batch(self.windows, self.motion_normalizer, partition=self.partition)
        super().__init__(config, data, self.model.parameters())

    def compute_loss(self, batch: MotionBatch) -> Tuple[Tensor, Dict[str, float]]:
        out = self.model(batch.motion_upper, batch.motion_lower)
        losses = tpmae_losses(out.root, batch.target_root, out.non_root, batch.target_non_root,
                              self.joint_weights, self.config.smooth_l1_beta)
        return losses.total, losses.values()

    def bundle(self) -> VtmBundle:
        cam = self.dataset.camera
        return VtmBundle(
            kind="tpmae",
            model=self.model,
            motion_normalizer=self.motion_normalizer,
            keypoint_normalizer=KeypointNormalizer(float(cam.width), float(cam.height)),
            virtual=self.dataset.virtual,
            partition=self.partition,
            metadata={"epochs": self.config.epochs, "seed": self.config.seed, "windows": len(self.windows),
                      "align_skeletons": self.dataset.aligned},
        )


class VtmTrainer(BaseTrainer):
    """Joint training of the visual encoder with the motion auto-encoder.

    The auto-encoder normally comes pre-trained from a ``tpmae`` bundle; with
    ``tpmae=None`` a fresh one is built from ``tpmae_config`` and both are
    trained from scratch. With ``freeze_tpmae_decoders`` only the visual
    encoder is optimised and the auto-encoder keeps its pre-trained values.
    """
    stage = "vtm"
    columns = VTM_COLUMNS

    def __init__(self, dataset: Dataset, tpmae: Optional[VtmBundle], config: TrainingConfig,
                 tpve_config: Optional[TpveConfig] = None, tpmae_config: Optional[TpmaeConfig] = None):
        if tpmae is not None and tpmae.kind != "tpmae":
            raise ConfigError(f"joint training starts from a tpmae checkpoint, got {tpmae.kind}")
        if tpmae is not None and tpmae_config is not None:
            raise ConfigError("pass either a pre-trained auto-encoder or a config for a fresh one, not both")
        if tpmae is None and config.freeze_tpmae_decoders:
            raise ConfigError("freeze_tpmae_decoders needs a pre-trained auto-encoder")
        self.dataset = dataset
        self.pretrained = tpmae is not None
        self.windows = _windows(dataset, config)
        cam = dataset.camera
        self.keypoint_normalizer = KeypointNormalizer(float(cam.width), float(cam.height))

        if tpmae is None:
            motion_model = TpmaeModel(tpmae_config or TpmaeConfig(), seed=config.seed)
            self.motion_normalizer = MotionNormalizer.fit([s.motion.frames for s in dataset.sequences])
            self.partition = default_partition(motion_model.config.two_part)
            logger.info("No pre-trained auto-encoder; training both networks from scratch")
        else:
            motion_model = tpmae.tpmae
            self.motion_normalizer, self.partition = tpmae.motion_normalizer, tpmae.partition
            if bool(tpmae.metadata.get("align_skeletons", True)) != dataset.aligned:
                logger.warning(f"auto-encoder was trained with align_skeletons="
                               f"{tpmae.metadata.get('align_skeletons', True)}, dataset has {dataset.aligned}")

        tpve_config = tpve_config or _matching_tpve_config(motion_model.config, config)
        if config.feature_mode == "file":
            if tpve_config.feature_dim != config.feature_dim:
                raise ConfigError(f"feature_dim {config.feature_dim} does not match the model's "
                                  f"{tpve_config.feature_dim}")
            self.features = FeatureProvider.from_directory(config.feature_dir, config.feature_dim,
                                                           [s.sequence_id for s in dataset.sequences])
        else:
            self.features = FeatureProvider("zeros", config.feature_dim)
        self.model = VtmModel.from_tpmae(motion_model, tpve_config, seed=config.seed)
        data = build_batch(self.windows, self.motion_normalizer, self.keypoint_normalizer, self.features,
                           self.partition)
        if config.zero_keypoints:
            data.key_upper, data.key_lower = np.zeros_like(data.key_upper), np.zeros_like(data.key_lower)
        params = self.model.tpve.parameters() if config.freeze_tpmae_decoders else self.model.parameters()
        super().__init__(config, data, params)

    def losses(self, batch: MotionBatch) -> VtmLosses:
        cfg = self.config
        beta, w = cfg.smooth_l1_beta, self.joint_weights
        out = self.model(batch.motion_upper, batch.motion_lower, batch.key_upper, batch.key_lower, batch.features)
        motion = tpmae_losses(out.motion.root, batch.target_root, out.motion.non_root, batch.target_non_root, w, beta)
        return VtmLosses(
            alignment=alignment_loss(out.visual.upper_latents, out.motion.upper_latents,
                                     out.visual.lower_latents, out.motion.lower_latents,
                                     kind=cfg.alignment_loss, beta=beta),
            bone=bone_loss(out.visual.bone_ratios, batch.bone_ratios, beta=beta),
            prediction=motion_rec_loss(out.root, batch.target_root, out.non_root, batch.target_non_root, w, beta),
            smoothness=smoothness_loss(out.root, batch.target_root, out.non_root, batch.target_non_root, w, beta),
            motion=motion,
        )

    def compute_loss(self, batch: MotionBatch) -> Tuple[Tensor, Dict[str, float]]:
        losses = self.losses(batch)
        return vtm_total_loss(losses, self.config.loss_weights), losses.values()

    def bundle(self) -> VtmBundle:
        cfg = self.config
        return VtmBundle(
            kind="vtm",
            model=self.model,
            motion_normalizer=self.motion_normalizer,
            keypoint_normalizer=self.keypoint_normalizer,
            virtual=self.dataset.virtual,
            partition=self.partition,
            metadata={"epochs": cfg.epochs, "seed": cfg.seed, "windows": len(self.windows),
                      "alignment_loss": cfg.alignment_loss, "feature_mode": cfg.feature_mode,
                      "freeze_tpmae_decoders": cfg.freeze_tpmae_decoders, "zero_keypoints": cfg.zero_keypoints,
                      "pretrained_tpmae": self.pretrained, "align_skeletons": self.dataset.aligned},
        )


def _matching_tpve_config(motion: TpmaeConfig, config: TrainingConfig) -> TpveConfig:
    """Default visual encoder whose latents line up with ``motion``."""
    return TpveConfig(
        upper_joints=motion.upper_joints, lower_joints=motion.lower_joints, two_part=motion.two_part,
        upper_encoder_channels=motion.upper_encoder_channels, lower_encoder_channels=motion.lower_encoder_channels,
        encoder_strides=motion.encoder_strides, feature_dim=config.feature_dim, use_ctca=config.use_ctca,
    )


__all__ = [
    "TrainingConfig", "EpochLog", "BaseTrainer", "TpmaeTrainer", "VtmTrainer", "LOG_NAME", "SEED_ENV",
    "TPMAE_COLUMNS", "VTM_COLUMNS",
]
