"""Functional interface over the differentiable ops, used as ``F`` in model code."""

from typing import Optional, Sequence, Tuple

import numpy as np

from . import ops
from .tensor import Tensor


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` ([B, C_in, T] or [C_in, T]) with ``weight`` [C_out, C_in, K]."""
    unbatched = x.ndim == 2
    if unbatched:
        x = x.reshape(1, *x.shape)
    y = ops.Conv1d.apply(x, weight, stride=stride, padding=padding)
    if bias is not None:
        y = y + bias.reshape(1, -1, 1)
    return y.reshape(*y.shape[1:]) if unbatched else y


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    unbatched = x.ndim == 2
    if unbatched:
        x = x.reshape(1, *x.shape)
    y = ops.ConvTranspose1d.apply(x, weight, stride=stride, padding=padding)
    if bias is not None:
        y = y + bias.reshape(1, -1, 1)
    return y.reshape(*y.shape[1:]) if unbatched else y


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    y = x @ weight.transpose(1, 0)
    if bias is not None:
        y = y + bias
    return y


def pad1d(x: Tensor, paddings: Tuple[int, int]) -> Tensor:
    return ops.Pad1d.apply(x, paddings=tuple(paddings))


def unpad1d(x: Tensor, paddings: Tuple[int, int]) -> Tensor:
    left, right = paddings
    return x[..., left:x.shape[-1] - right]


def leaky_relu(x: Tensor, negative_slope: float = 0.01) -> Tensor:
    return ops.LeakyReLU.apply(x, negative_slope=negative_slope)


def softplus(x: Tensor) -> Tensor:
    return ops.Softplus.apply(x)


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    return ops.Softmax.apply(x, axis=axis, mask=mask)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return ops.LogSoftmax.apply(x, axis=axis)


def normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    return ops.Normalize.apply(x, axis=axis, eps=eps)


def cat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return ops.Concat.apply(*tensors, axis=axis)


def smooth_l1_loss(pred: Tensor, target, beta: float = 1.0) -> Tensor:
    """Mean-reduced smooth-L1 loss."""
    return ops.SmoothL1.apply(pred, target, beta=beta)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under row-wise ``logits`` [N, C]."""
    logp = log_softmax(logits, axis=-1)
    picked = logp[np.arange(logits.shape[0]), np.asarray(targets)]
    return -picked.mean()


__all__ = [
    "conv1d", "conv_transpose1d", "linear", "pad1d", "unpad1d", "leaky_relu", "softplus",
    "softmax", "log_softmax", "normalize", "cat", "smooth_l1_loss", "cross_entropy",
]
