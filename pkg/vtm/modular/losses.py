"""Training objectives.

All terms are mean-reduced smooth-L1 losses on normalised motion rows, so each
is non-negative and vanishes exactly when its two arguments agree.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from transformers.utils import logging

from ..autodiff import functional as F
from ..autodiff.tensor import Tensor
from ..errors import ConfigError, ShapeError
from ..processor.skeleton import END_EFFECTORS, NUM_JOINTS

logger = logging.get_logger(__name__)

ALIGNMENT_LOSSES = ("l1", "contrastive", "l1+contrastive")


@dataclass(frozen=True, eq=False)
class JointWeights:
    """Relative importance of the root and of each non-root joint (canonical order, root excluded)."""
    root: float = 2.0
    non_root: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.non_root is None:
            weights = np.ones(NUM_JOINTS - 1)
            weights[np.array(END_EFFECTORS) - 1] = 1.5
            object.__setattr__(self, "non_root", weights)
        weights = np.asarray(self.non_root, dtype=np.float64)
        if weights.shape != (NUM_JOINTS - 1,):
            raise ShapeError(f"non-root weights must have {NUM_JOINTS - 1} entries, got {weights.shape}")
        if self.root <= 0 or np.any(weights <= 0):
            raise ConfigError("joint weights must be positive")
        weights.setflags(write=False)
        object.__setattr__(self, "non_root", weights)

    def scaled(self, factor: float) -> "JointWeights":
        return JointWeights(self.root * factor, self.non_root * factor)


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the five terms of the joint objective."""
    alignment: float = 1.0
    bone: float = 1.0
    prediction: float = 1.0
    smoothness: float = 1.0
    motion: float = 1.0


def _shape(x) -> tuple:
    return tuple(x.shape) if isinstance(x, Tensor) else tuple(np.shape(x))


def _check_pair(pred: Tensor, target, name: str):
    if _shape(pred) != _shape(target):
        raise ShapeError(f"{name}: prediction {_shape(pred)} and target {_shape(target)} differ")


def _weighted_pair(pred: Tensor, target, weights: np.ndarray):
    return pred * weights, (target * weights if isinstance(target, Tensor) else np.asarray(target) * weights)


def motion_rec_loss(pred_root: Tensor, target_root, pred_non_root: Tensor, target_non_root,
                    weights: JointWeights = JointWeights(), beta: float = 1.0) -> Tensor:
    """Weighted reconstruction of the root head [B, T, 8] and the non-root rows [B, T, 23, C].

    The weight multiplies both arguments before the smooth-L1.
    """
    _check_pair(pred_root, target_root, "root reconstruction")
    _check_pair(pred_non_root, target_non_root, "non-root reconstruction")
    w_nr = weights.non_root[:, None]
    root_loss = F.smooth_l1_loss(*_weighted_pair(pred_root, target_root, weights.root), beta=beta)
    non_root_loss = F.smooth_l1_loss(*_weighted_pair(pred_non_root, target_non_root, w_nr), beta=beta)
    return root_loss + non_root_loss


def temporal_difference(x):
    """``x[:, t] - x[:, t-1]`` for t >= 1 along the time axis (axis 1)."""
    return x[:, 1:] - x[:, :-1]


def smoothness_loss(pred_root: Tensor, target_root, pred_non_root: Tensor, target_non_root,
                    weights: JointWeights = JointWeights(), beta: float = 1.0) -> Tensor:
    """Velocity and acceleration agreement; the root terms carry the root weight, non-root terms none."""
    _check_pair(pred_root, target_root, "root smoothness")
    _check_pair(pred_non_root, target_non_root, "non-root smoothness")
    if pred_root.shape[1] < 3:
        raise ShapeError(f"smoothness needs at least 3 frames, got {pred_root.shape[1]}")
    total = None
    for pr, tr, pn, tn in _differences(pred_root, target_root, pred_non_root, target_non_root):
        term = (F.smooth_l1_loss(pr * weights.root, tr * weights.root, beta=beta)
                + F.smooth_l1_loss(pn, tn, beta=beta))
        total = term if total is None else total + term
    return total


def _differences(*xs):
    velocities = [temporal_difference(x) for x in xs]
    yield velocities
    yield [temporal_difference(v) for v in velocities]


def _parts(visual_upper, motion_upper, visual_lower, motion_lower):
    # a one-part model has no lower latents on either side
    if (visual_lower is None) != (motion_lower is None):
        raise ShapeError("visual and motion latents must cover the same body parts")
    _check_pair(visual_upper, motion_upper, "upper alignment")
    pairs = [(visual_upper, motion_upper)]
    if visual_lower is not None:
        _check_pair(visual_lower, motion_lower, "lower alignment")
        pairs.append((visual_lower, motion_lower))
    return pairs


def manifold_alignment_loss(visual_upper: Tensor, motion_upper, visual_lower: Optional[Tensor], motion_lower,
                            beta: float = 1.0) -> Tensor:
    """Distance of the visual latents to the motion priors, per body part."""
    total = None
    for visual, motion in _parts(visual_upper, motion_upper, visual_lower, motion_lower):
        term = F.smooth_l1_loss(visual, motion, beta=beta)
        total = term if total is None else total + term
    return total


def contrastive_alignment_loss(visual_upper: Tensor, motion_upper: Tensor, visual_lower: Optional[Tensor],
                               motion_lower: Optional[Tensor], temperature: float = 0.07) -> Tensor:
    """Symmetric cross-entropy over scaled cosine similarities of latent windows within a batch.

    Window ``i`` of the visual latents is the positive for window ``i`` of the
    motion latents and every other window in the batch is a negative.
    """
    pairs = _parts(visual_upper, motion_upper, visual_lower, motion_lower)
    B = visual_upper.shape[0]
    targets = np.arange(B)
    total = None
    for visual, motion in pairs:
        v = F.normalize(visual.reshape(B, -1), axis=1)
        m = F.normalize(motion.reshape(B, -1), axis=1)
        logits = (v @ m.transpose(1, 0)) * (1.0 / temperature)
        term = (F.cross_entropy(logits, targets) + F.cross_entropy(logits.transpose(1, 0), targets)) * 0.5
        total = term if total is None else total + term
    return total


def alignment_loss(visual_upper: Tensor, motion_upper, visual_lower: Tensor, motion_lower,
                   kind: str = "l1", beta: float = 1.0) -> Tensor:
    if kind == "l1":
        return manifold_alignment_loss(visual_upper, motion_upper, visual_lower, motion_lower, beta=beta)
    if kind == "contrastive":
        return contrastive_alignment_loss(visual_upper, motion_upper, visual_lower, motion_lower)
    if kind == "l1+contrastive":
        return (manifold_alignment_loss(visual_upper, motion_upper, visual_lower, motion_lower, beta=beta)
                + contrastive_alignment_loss(visual_upper, motion_upper, visual_lower, motion_lower))
    raise ConfigError(f"unknown alignment loss {kind!r}; expected one of {ALIGNMENT_LOSSES}")


def bone_loss(pred_ratios: Tensor, target_ratios, beta: float = 1.0) -> Tensor:
    _check_pair(pred_ratios, target_ratios, "bone ratios")
    return F.smooth_l1_loss(pred_ratios, target_ratios, beta=beta)


@dataclass
class TpmaeLosses:
    reconstruction: Tensor
    smoothness: Tensor

    @property
    def total(self) -> Tensor:
        return self.reconstruction + self.smoothness

    def values(self) -> dict:
        return {"L_rec": self.reconstruction.item(), "L_s": self.smoothness.item()}


@dataclass
class VtmLosses:
    alignment: Tensor
    bone: Tensor
    prediction: Tensor
    smoothness: Tensor
    motion: TpmaeLosses

    def values(self) -> dict:
        out = self.motion.values()
        out.update({"L_ma": self.alignment.item(), "L_b": self.bone.item(),
                    "L_pred": self.prediction.item(), "L_s_v": self.smoothness.item()})
        return out


def tpmae_losses(pred_root, target_root, pred_non_root, target_non_root,
                 weights: JointWeights = JointWeights(), beta: float = 1.0) -> TpmaeLosses:
    return TpmaeLosses(
        reconstruction=motion_rec_loss(pred_root, target_root, pred_non_root, target_non_root, weights, beta),
        smoothness=smoothness_loss(pred_root, target_root, pred_non_root, target_non_root, weights, beta),
    )


def vtm_total_loss(losses: VtmLosses, weights: Optional[LossWeights] = None) -> Tensor:
    """Weighted sum of alignment, bone, visual prediction, visual smoothness and motion terms."""
    w = weights or LossWeights()
    return (losses.alignment * w.alignment + losses.bone * w.bone + losses.prediction * w.prediction
            + losses.smoothness * w.smoothness + losses.motion.total * w.motion)


__all__ = [
    "ALIGNMENT_LOSSES", "JointWeights", "LossWeights", "TpmaeLosses", "VtmLosses",
    "motion_rec_loss", "smoothness_loss", "manifold_alignment_loss", "contrastive_alignment_loss",
    "alignment_loss", "bone_loss", "tpmae_losses", "vtm_total_loss", "temporal_difference",
]
