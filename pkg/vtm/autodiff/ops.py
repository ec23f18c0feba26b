"""Differentiable operations. Each op works on float64 arrays; see ``Function``."""

import contextlib
import threading
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, logsumexp

from ..errors import ShapeError
from .tensor import Function

_kinks = threading.local()


@contextlib.contextmanager
def record_kinks():
    """Collect the sign pattern of every piecewise-linear activation evaluated in the block."""
    previous = getattr(_kinks, "log", None)
    _kinks.log = []
    try:
        yield _kinks.log
    finally:
        _kinks.log = previous


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise --------------------------------------------------------------

class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return unbroadcast(grad * self.b, self.a.shape), unbroadcast(grad * self.a, self.b.shape)


class Div(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        ga = grad / self.b
        gb = -grad * self.a / (self.b * self.b)
        return unbroadcast(ga, self.a.shape), unbroadcast(gb, self.b.shape)


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return -grad


class LeakyReLU(Function):
    def forward(self, x, negative_slope: float = 0.01):
        self.positive = x > 0
        self.slope = negative_slope
        log = getattr(_kinks, "log", None)
        if log is not None:
            log.append(self.positive)
        return np.where(self.positive, x, negative_slope * x)

    def backward(self, grad):
        return np.where(self.positive, grad, self.slope * grad)


class Softplus(Function):
    def forward(self, x):
        self.x = x
        return np.logaddexp(0.0, x)

    def backward(self, grad):
        return grad * expit(self.x)


# linear algebra and reductions -------------------------------------------

class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError("matmul expects operands with at least 2 dimensions")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        ga = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        gb = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return unbroadcast(ga, self.a.shape), unbroadcast(gb, self.b.shape)


def _expand_reduced(grad, shape, axis, keepdims):
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = sorted(a % len(shape) for a in axes)
        for a in axes:
            grad = np.expand_dims(grad, a)
    return np.broadcast_to(grad, shape)


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.sum(x, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        return np.array(_expand_reduced(grad, self.shape, self.axis, self.keepdims))


class Mean(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        out = np.mean(x, axis=axis, keepdims=keepdims)
        self.count = x.size // max(np.size(out), 1)
        return out

    def backward(self, grad):
        return np.array(_expand_reduced(grad, self.shape, self.axis, self.keepdims)) / self.count


# shape ----------------------------------------------------------------------

class Reshape(Function):
    def forward(self, x, shape=()):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return grad.reshape(self.shape)


class Transpose(Function):
    def forward(self, x, axes=()):
        self.inverse = tuple(np.argsort(axes))
        return np.transpose(x, axes)

    def backward(self, grad):
        return np.transpose(grad, self.inverse)


class GetItem(Function):
    def forward(self, x, index=None):
        self.shape, self.index = x.shape, index
        return np.array(x[index])

    def backward(self, grad):
        out = np.zeros(self.shape)
        index = self.index if isinstance(self.index, tuple) else (self.index,)
        if any(isinstance(i, (np.ndarray, list)) for i in index):
            np.add.at(out, self.index, grad)
        else:
            out[self.index] += grad
        return out


class Concat(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


class Pad1d(Function):
    """Zero padding of the last axis."""

    def forward(self, x, paddings=(0, 0)):
        left, right = paddings
        if left < 0 or right < 0:
            raise ShapeError(f"negative padding {paddings}")
        self.left, self.length = left, x.shape[-1]
        widths = [(0, 0)] * (x.ndim - 1) + [(left, right)]
        return np.pad(x, widths)

    def backward(self, grad):
        return grad[..., self.left:self.left + self.length]


# normalisation ------------------------------------------------------------

class Softmax(Function):
    def forward(self, x, axis=-1, mask=None):
        if mask is not None:
            x = np.where(mask, x, -np.inf)
        shifted = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.y = e / np.sum(e, axis=axis, keepdims=True)
        self.axis = axis
        return self.y

    def backward(self, grad):
        y = self.y
        return y * (grad - np.sum(grad * y, axis=self.axis, keepdims=True))


class LogSoftmax(Function):
    def forward(self, x, axis=-1):
        out = x - logsumexp(x, axis=axis, keepdims=True)
        self.softmax = np.exp(out)
        self.axis = axis
        return out

    def backward(self, grad):
        return grad - self.softmax * np.sum(grad, axis=self.axis, keepdims=True)


class Normalize(Function):
    """L2-normalisation along ``axis``; norms below ``eps`` are clamped."""

    def forward(self, x, axis=-1, eps=1e-12):
        norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
        self.clamped = norm < eps
        self.norm = np.maximum(norm, eps)
        self.y = x / self.norm
        self.axis = axis
        return self.y

    def backward(self, grad):
        proj = np.sum(grad * self.y, axis=self.axis, keepdims=True)
        full = (grad - self.y * np.where(self.clamped, 0.0, proj)) / self.norm
        return full


# losses -------------------------------------------------------------------

class SmoothL1(Function):
    """Mean smooth-L1 (Huber with slope 1) between two equally shaped arrays."""

    def forward(self, pred, target, beta=1.0):
        if pred.shape != target.shape:
            raise ShapeError(f"smooth_l1 shape mismatch {pred.shape} vs {target.shape}")
        if beta <= 0:
            raise ValueError(f"beta must be positive, got {beta}")
        d = pred - target
        ad = np.abs(d)
        self.quadratic = ad < beta
        self.d, self.beta = d, beta
        return np.mean(np.where(self.quadratic, 0.5 * d * d / beta, ad - 0.5 * beta))

    def backward(self, grad):
        local = np.where(self.quadratic, self.d / self.beta, np.sign(self.d)) / self.d.size
        g = grad * local
        return g, -g


# convolution ------------------------------------------------------------------

def _check_conv_input(x, w, in_axis):
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv expects input [B, C, T] and a 3-d kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[in_axis]:
        raise ShapeError(f"conv channel mismatch: input has {x.shape[1]}, kernel expects {w.shape[in_axis]}")


class Conv1d(Function):
    """Strided 1D cross-correlation. Input [B, C_in, T], kernel [C_out, C_in, K]."""

    def forward(self, x, w, stride=1, padding=0):
        _check_conv_input(x, w, 1)
        B, C, T = x.shape
        K = w.shape[2]
        if stride < 1:
            raise ShapeError(f"stride must be >= 1, got {stride}")
        if T + 2 * padding < K:
            raise ShapeError(f"input length {T} with padding {padding} is shorter than kernel {K}")
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
        windows = sliding_window_view(xp, K, axis=2)[:, :, ::stride]
        self.windows, self.w = windows, w
        self.stride, self.padding, self.length, self.padded_shape = stride, padding, T, xp.shape
        out = np.tensordot(windows, w, axes=([1, 3], [1, 2]))
        return np.ascontiguousarray(out.transpose(0, 2, 1))

    def backward(self, grad):
        K = self.w.shape[2]
        T_out = grad.shape[2]
        gw = np.tensordot(grad, self.windows, axes=([0, 2], [0, 2]))
        gwin = np.tensordot(grad, self.w, axes=([1], [0]))
        gxp = np.zeros(self.padded_shape)
        span = self.stride * (T_out - 1) + 1
        for k in range(K):
            gxp[:, :, k:k + span:self.stride] += gwin[:, :, :, k].transpose(0, 2, 1)
        gx = gxp[:, :, self.padding:self.padding + self.length]
        return gx, gw


class ConvTranspose1d(Function):
    """Transposed 1D convolution. Input [B, C_in, T], kernel [C_in, C_out, K].

    Output length is ``(T - 1) * stride + K - 2 * padding``.
    """

    def forward(self, x, w, stride=1, padding=0):
        _check_conv_input(x, w, 0)
        B, _, T = x.shape
        _, C_out, K = w.shape
        full = (T - 1) * stride + K
        if full - 2 * padding < 1:
            raise ShapeError(f"transposed conv output would be empty for length {T}")
        contrib = np.tensordot(x, w, axes=([1], [0]))
        y = np.zeros((B, C_out, full))
        span = stride * (T - 1) + 1
        for k in range(K):
            y[:, :, k:k + span:stride] += contrib[:, :, :, k].transpose(0, 2, 1)
        self.x, self.w, self.stride, self.padding, self.full = x, w, stride, padding, full
        return y[:, :, padding:full - padding]

    def backward(self, grad):
        K = self.w.shape[2]
        gfull = np.pad(grad, ((0, 0), (0, 0), (self.padding, self.padding))) if self.padding else grad
        windows = sliding_window_view(gfull, K, axis=2)[:, :, ::self.stride]
        gx = np.tensordot(windows, self.w, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
        gw = np.tensordot(self.x, windows, axes=([0, 2], [0, 2]))
        return np.ascontiguousarray(gx), gw


__all__ = [
    "Add", "Sub", "Mul", "Div", "Neg", "LeakyReLU", "Softplus", "MatMul", "Sum", "Mean",
    "Reshape", "Transpose", "GetItem", "Concat", "Pad1d", "Softmax", "LogSoftmax",
    "Normalize", "SmoothL1", "Conv1d", "ConvTranspose1d", "record_kinks", "unbroadcast",
]
