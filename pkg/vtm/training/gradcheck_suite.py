"""Finite-difference checks of every differentiable op and of both training objectives."""

from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from transformers.utils import logging

from ..autodiff import functional as F
from ..autodiff.gradcheck import GradcheckReport, gradcheck
from ..autodiff.tensor import Tensor, no_grad
from ..modular.configuration_vtm import narrow_configs
from ..modular.losses import (
    JointWeights,
    VtmLosses,
    alignment_loss,
    bone_loss,
    motion_rec_loss,
    smoothness_loss,
    tpmae_losses,
    vtm_total_loss,
)
from ..modular.modeling_tpmae import TpmaeModel
from ..modular.modeling_vtm import VtmModel, motion_targets
from ..processor.representation import CANONICAL_PARTITION, split_parts
from ..processor.skeleton import NUM_BONES, NUM_JOINTS

logger = logging.get_logger(__name__)

OpCase = Tuple[str, Sequence[Tuple[int, ...]], Callable[..., Tensor]]


def _op_cases() -> List[OpCase]:
    mask = np.tril(np.ones((5, 5), dtype=bool))
    return [
        ("add", [(3, 4), (4,)], lambda a, b: a + b),
        ("sub", [(3, 4), (3, 1)], lambda a, b: a - b),
        ("mul", [(3, 4), (3, 4)], lambda a, b: a * b),
        ("div", [(3, 4), (4,)], lambda a, b: a / (b * b + 1.0)),
        ("neg", [(3, 4)], lambda a: -a),
        ("matmul", [(2, 3, 4), (4, 5)], lambda a, b: a @ b),
        ("sum", [(3, 4, 2)], lambda a: a.sum(axis=1)),
        ("mean", [(3, 4, 2)], lambda a: a.mean(axis=(0, 2), keepdims=True)),
        ("reshape", [(3, 4)], lambda a: a.reshape(2, 6)),
        ("transpose", [(2, 3, 4)], lambda a: a.transpose(2, 0, 1)),
        ("getitem", [(4, 5)], lambda a: a[1:3, ::2]),
        ("getitem_fancy", [(4, 5)], lambda a: a[np.array([0, 2, 2]), 1:]),
        ("concat", [(2, 3), (2, 4)], lambda a, b: F.cat([a, b], axis=1)),
        ("pad1d", [(2, 3, 4)], lambda a: F.pad1d(a, (2, 1))),
        ("leaky_relu", [(4, 5)], lambda a: F.leaky_relu(a, 0.2)),
        ("softplus", [(4, 5)], lambda a: F.softplus(a)),
        ("softmax", [(2, 5, 5)], lambda a: F.softmax(a, axis=-1, mask=np.broadcast_to(mask, (2, 5, 5)))),
        ("log_softmax", [(3, 6)], lambda a: F.log_softmax(a, axis=-1)),
        ("normalize", [(3, 6)], lambda a: F.normalize(a, axis=1)),
        ("smooth_l1", [(4, 6), (4, 6)], lambda a, b: F.smooth_l1_loss(a * 2.0, b, beta=1.0)),
        ("linear", [(3, 5), (4, 5), (4,)], lambda x, w, b: F.linear(x, w, b)),
        ("conv1d", [(2, 3, 9), (4, 3, 3), (4,)], lambda x, w, b: F.conv1d(x, w, b, stride=2, padding=1)),
        ("conv_transpose1d", [(2, 3, 5), (3, 4, 4), (4,)],
         lambda x, w, b: F.conv_transpose1d(x, w, b, stride=2, padding=1)),
    ]


def op_checks(seed: int = 0, eps: float = 1e-6) -> List[GradcheckReport]:
    """One report per op; every op output is reduced against a fixed random projection."""
    rng = np.random.default_rng(seed)
    reports = []
    for label, shapes, op in _op_cases():
        inputs = [Tensor(rng.normal(size=shape), requires_grad=True) for shape in shapes]
        with no_grad():
            sample = op(*inputs)
        projection = rng.normal(size=sample.shape)

        def fn(op=op, inputs=inputs, projection=projection):
            return (op(*inputs) * projection).sum()

        names = [(f"x{i}", t) for i, t in enumerate(inputs)]
        reports.append(gradcheck(fn, names, eps=eps, label=label))
    return reports


def _sample_batch(rng: np.random.Generator, batch: int, frames: int, feature_dim: int) -> Dict[str, np.ndarray]:
    motion = rng.normal(scale=0.8, size=(batch, frames, NUM_JOINTS, 12))
    keypoints = rng.normal(scale=0.5, size=(batch, frames, NUM_JOINTS, 4))
    upper, lower, target_root, target_non_root = motion_targets(motion, CANONICAL_PARTITION)
    key_upper, key_lower = split_parts(keypoints, CANONICAL_PARTITION)
    return {
        "motion_upper": upper, "motion_lower": lower,
        "target_root": target_root, "target_non_root": target_non_root,
        "key_upper": key_upper, "key_lower": key_lower,
        "bone_ratios": rng.uniform(0.8, 1.2, size=(batch, NUM_BONES)),
        "features": rng.normal(size=(batch, frames, feature_dim)),
    }


def loss_checks(seed: int = 0, max_entries: int = 4, eps: float = 1e-6) -> List[GradcheckReport]:
    """Auto-encoder objective and joint objective on a narrow model, sampled per parameter tensor."""
    rng = np.random.default_rng(seed)
    config = narrow_configs()
    data = _sample_batch(rng, batch=2, frames=8, feature_dim=config.tpve_config.feature_dim)
    weights = JointWeights()

    tpmae = TpmaeModel(config.tpmae_config, seed=seed)

    def tpmae_objective():
        out = tpmae(data["motion_upper"], data["motion_lower"])
        return tpmae_losses(out.root, data["target_root"], out.non_root, data["target_non_root"], weights).total

    vtm = VtmModel(config, seed=seed)

    def vtm_objective():
        out = vtm(data["motion_upper"], data["motion_lower"], data["key_upper"], data["key_lower"], data["features"])
        motion = tpmae_losses(out.motion.root, data["target_root"], out.motion.non_root, data["target_non_root"],
                              weights)
        return vtm_total_loss(VtmLosses(
            alignment=alignment_loss(out.visual.upper_latents, out.motion.upper_latents,
                                     out.visual.lower_latents, out.motion.lower_latents, kind="l1+contrastive"),
            bone=bone_loss(out.visual.bone_ratios, data["bone_ratios"]),
            prediction=motion_rec_loss(out.root, data["target_root"], out.non_root, data["target_non_root"], weights),
            smoothness=smoothness_loss(out.root, data["target_root"], out.non_root, data["target_non_root"], weights),
            motion=motion,
        ))

    return [
        gradcheck(tpmae_objective, list(tpmae.named_parameters()), eps=eps, max_entries=max_entries, seed=seed,
                  label="tpmae_loss"),
        gradcheck(vtm_objective, list(vtm.named_parameters()), eps=eps, max_entries=max_entries, seed=seed,
                  label="vtm_loss"),
    ]


def run_suite(seed: int = 0, max_entries: int = 4, tol: float = 1e-4) -> Tuple[bool, List[GradcheckReport]]:
    reports = op_checks(seed) + loss_checks(seed, max_entries)
    for report in reports:
        logger.info(report.format())
    passed = all(r.passed(tol) for r in reports)
    return passed, reports


__all__ = ["op_checks", "loss_checks", "run_suite"]
