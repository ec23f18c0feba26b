"""Evaluation metrics. Positions are in meters, every metric is reported in millimeters."""

from dataclasses import asdict, dataclass
from typing import Dict

import numpy as np
from transformers.utils import logging

from .errors import DegenerateFrameError, ShapeError, TopologyMismatchError
from .processor.skeleton import ROOT, Skeleton

logger = logging.get_logger(__name__)

MILLIMETERS = 1000.0
# relative singular-value threshold below which a frame's joints are treated as collinear
RANK_TOLERANCE = 1e-9


def _positions(pred: np.ndarray, gt: np.ndarray):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if pred.ndim < 2 or pred.shape[-1] != 3:
        raise ShapeError(f"expected positions [..., J, 3], got {pred.shape}")
    return pred, gt


def mpjpe(pred: np.ndarray, gt: np.ndarray, root_relative: bool = True) -> float:
    """Mean per-joint position error of [F, J, 3] arrays.

    With ``root_relative`` both poses are centred on their root joint first;
    the global root error is reported separately by :func:`mrpe`.
    """
    pred, gt = _positions(pred, gt)
    if root_relative:
        pred = pred - pred[..., ROOT:ROOT + 1, :]
        gt = gt - gt[..., ROOT:ROOT + 1, :]
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)) * MILLIMETERS)


def similarity_align(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per frame, the scaled rotation plus translation of ``pred`` [F, J, 3] closest to ``gt`` in least squares."""
    pred, gt = _positions(pred, gt)
    squeeze = pred.ndim == 2
    if squeeze:
        pred, gt = pred[None], gt[None]
    mu_p = pred.mean(axis=1, keepdims=True)
    mu_g = gt.mean(axis=1, keepdims=True)
    x, y = pred - mu_p, gt - mu_g

    aligned = np.empty_like(pred)
    for f in range(pred.shape[0]):
        for name, pts in (("prediction", x[f]), ("ground truth", y[f])):
            sv = np.linalg.svd(pts, compute_uv=False)
            if sv[0] == 0.0 or sv[1] <= RANK_TOLERANCE * sv[0]:
                raise DegenerateFrameError(f"frame {f}: {name} joints are collinear or coincident")
        cov = y[f].T @ x[f] / pred.shape[1]
        U, S, Vt = np.linalg.svd(cov)
        D = np.ones(3)
        if np.linalg.det(U) * np.linalg.det(Vt) < 0:
            D[-1] = -1.0
        rot = (U * D) @ Vt
        var_x = np.sum(x[f] ** 2) / pred.shape[1]
        scale = np.sum(S * D) / var_x
        aligned[f] = scale * x[f] @ rot.T + mu_g[f]
    return aligned[0] if squeeze else aligned


def pa_mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """MPJPE after per-frame similarity (Procrustes) alignment."""
    pred, gt = _positions(pred, gt)
    aligned = similarity_align(pred, gt)
    return float(np.mean(np.linalg.norm(aligned - gt, axis=-1)) * MILLIMETERS)


def mrpe(pred_root: np.ndarray, gt_root: np.ndarray) -> float:
    """Mean root position error of [F, 3] trajectories."""
    pred_root = np.asarray(pred_root, dtype=np.float64)
    gt_root = np.asarray(gt_root, dtype=np.float64)
    if pred_root.shape != gt_root.shape or pred_root.shape[-1] != 3:
        raise ShapeError(f"root tracks must be equal [F, 3] arrays, got {pred_root.shape} and {gt_root.shape}")
    return float(np.mean(np.linalg.norm(pred_root - gt_root, axis=-1)) * MILLIMETERS)


def mble(pred_skeleton: Skeleton, gt_skeleton: Skeleton) -> float:
    """Mean absolute bone-length error."""
    if not pred_skeleton.same_topology(gt_skeleton):
        raise TopologyMismatchError("skeletons have different joint tables")
    return float(np.mean(np.abs(pred_skeleton.bone_lengths() - gt_skeleton.bone_lengths())) * MILLIMETERS)


@dataclass
class MetricsReport:
    mpjpe: float
    pa_mpjpe: float
    mrpe: float
    mble: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def format_report(report: MetricsReport) -> str:
    """``KEY: value`` lines in millimeters with one decimal."""
    rows = (("MPJPE", report.mpjpe), ("PA-MPJPE", report.pa_mpjpe), ("MRPE", report.mrpe), ("MBLE", report.mble))
    return "\n".join(f"{key}: {value:.1f}" for key, value in rows) + "\n"


def evaluate_motion(pred_positions: np.ndarray, gt_positions: np.ndarray, pred_skeleton: Skeleton,
                    gt_skeleton: Skeleton) -> MetricsReport:
    """All four metrics for one motion; root tracks are the root joint rows of the positions."""
    pred_positions, gt_positions = _positions(pred_positions, gt_positions)
    return MetricsReport(
        mpjpe=mpjpe(pred_positions, gt_positions),
        pa_mpjpe=pa_mpjpe(pred_positions, gt_positions),
        mrpe=mrpe(pred_positions[:, ROOT], gt_positions[:, ROOT]),
        mble=mble(pred_skeleton, gt_skeleton),
    )


def mean_report(reports, weights=None) -> MetricsReport:
    """Frame-weighted average of several reports."""
    reports = list(reports)
    if not reports:
        raise ShapeError("no reports to average")
    w = np.ones(len(reports)) if weights is None else np.asarray(weights, dtype=np.float64)
    values = np.array([[r.mpjpe, r.pa_mpjpe, r.mrpe, r.mble] for r in reports])
    return MetricsReport(*[float(v) for v in (w[:, None] * values).sum(axis=0) / w.sum()])


__all__ = [
    "mpjpe", "pa_mpjpe", "similarity_align", "mrpe", "mble", "MetricsReport", "format_report",
    "evaluate_motion", "mean_report",
]
