import math
from typing import Sequence

import numpy as np
from transformers.utils import logging

from ..autodiff import functional as F
from ..autodiff.nn import Conv1d, ConvTranspose1d, Linear, Module, ModuleList, Parameter
from ..autodiff.tensor import Tensor

logger = logging.get_logger(__name__)


def get_extra_padding_for_conv1d(length: int, kernel_size: int, stride: int, padding_total: int = 0) -> int:
    """Calculate extra padding needed for convolution to have the same output length"""
    n_frames = (length - kernel_size + padding_total) / stride + 1
    ideal_length = (math.ceil(n_frames) - 1) * stride + (kernel_size - padding_total)
    return ideal_length - length


class SConv1d(Module):
    """Conv1d with built-in asymmetric zero padding so that ``T_out = ceil(T / stride)``."""
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1,
                 rng: np.random.Generator = None, zero_bias: bool = False):
        super().__init__()
        self.conv = Conv1d(in_channels, out_channels, kernel_size, stride, rng=rng, zero_bias=zero_bias)
        self.kernel_size = kernel_size
        self.stride = stride
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.padding_total = (kernel_size - 1) - (stride - 1)

    def forward(self, x: Tensor) -> Tensor:
        extra_padding = get_extra_padding_for_conv1d(x.shape[-1], self.kernel_size, self.stride, self.padding_total)
        padding_right = self.padding_total // 2
        padding_left = self.padding_total - padding_right
        x = F.pad1d(x, (padding_left, padding_right + extra_padding))
        return self.conv(x)


class SConvTranspose1d(Module):
    """ConvTranspose1d trimmed so that ``T_out = T * stride``."""
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1,
                 rng: np.random.Generator = None):
        super().__init__()
        self.convtr = ConvTranspose1d(in_channels, out_channels, kernel_size, stride, rng=rng)
        self.kernel_size = kernel_size
        self.stride = stride
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.padding_total = kernel_size - stride

    def forward(self, x: Tensor) -> Tensor:
        y = self.convtr(x)
        padding_right = self.padding_total // 2
        padding_left = self.padding_total - padding_right
        if padding_left + padding_right > 0:
            y = F.unpad1d(y, (padding_left, padding_right))
        return y


class ConvEncoder(Module):
    """Strided SConv1d stack with leaky-ReLU between layers (none after the last)."""
    def __init__(self, in_channels: int, channels: Sequence[int], strides: Sequence[int], kernel_size: int,
                 negative_slope: float, rng: np.random.Generator):
        super().__init__()
        self.negative_slope = negative_slope
        self.layers = ModuleList()
        prev = in_channels
        for ch, stride in zip(channels, strides):
            self.layers.append(SConv1d(prev, ch, kernel_size, stride, rng=rng))
            prev = ch

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.leaky_relu(x, self.negative_slope)
        return x


class ConvDecoder(Module):
    """Mirror of :class:`ConvEncoder`: stride-1 steps become SConv1d, strided steps SConvTranspose1d.

    Every layer is followed by leaky-ReLU since an aggregation layer consumes the output.
    """
    def __init__(self, channels: Sequence[int], strides: Sequence[int], kernel_size: int, latent_kernel_size: int,
                 negative_slope: float, rng: np.random.Generator):
        super().__init__()
        self.negative_slope = negative_slope
        self.layers = ModuleList()
        # encoder maps c0 -> c1 -> ... -> cn; decoder walks cn -> ... -> c0 -> c0
        targets = list(reversed(channels[:-1])) + [channels[0]]
        prev = channels[-1]
        for ch, stride in zip(targets, reversed(strides)):
            if stride == 1:
                self.layers.append(SConv1d(prev, ch, latent_kernel_size, 1, rng=rng))
            else:
                self.layers.append(SConvTranspose1d(prev, ch, kernel_size, stride, rng=rng))
            prev = ch
        self.out_channels = prev

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = F.leaky_relu(layer(x), self.negative_slope)
        return x


class UpsamplingHead(Module):
    """Transposed-conv stack that undoes the encoder's temporal downsampling."""
    def __init__(self, in_channels: int, hidden: int, out_channels: int, strides: Sequence[int], kernel_size: int,
                 negative_slope: float, rng: np.random.Generator):
        super().__init__()
        self.negative_slope = negative_slope
        up = [s for s in reversed(strides) if s > 1] or [1]
        self.layers = ModuleList()
        prev = in_channels
        for i, stride in enumerate(up):
            ch = out_channels if i == len(up) - 1 else hidden
            self.layers.append(SConvTranspose1d(prev, ch, kernel_size, stride, rng=rng))
            prev = ch

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.leaky_relu(x, self.negative_slope)
        return x


class KeypointExtractor(Module):
    """Stride-1 conv stack lifting keypoint channels to a hidden width."""
    def __init__(self, in_channels: int, hidden: int, num_layers: int, negative_slope: float,
                 rng: np.random.Generator):
        super().__init__()
        self.negative_slope = negative_slope
        self.layers = ModuleList()
        prev = in_channels
        for _ in range(num_layers):
            self.layers.append(SConv1d(prev, hidden, 3, 1, rng=rng))
            prev = hidden

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = F.leaky_relu(layer(x), self.negative_slope)
        return x


class ResidualFusionBlock(Module):
    """Two k=3 convolutions with a 1x1 projection skip."""
    def __init__(self, in_channels: int, out_channels: int, negative_slope: float, rng: np.random.Generator):
        super().__init__()
        self.negative_slope = negative_slope
        self.conv1 = SConv1d(in_channels, out_channels, 3, 1, rng=rng)
        self.conv2 = SConv1d(out_channels, out_channels, 3, 1, rng=rng)
        self.skip = SConv1d(in_channels, out_channels, 1, 1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        h = F.leaky_relu(self.conv1(x), self.negative_slope)
        h = self.conv2(h)
        return F.leaky_relu(h + self.skip(x), self.negative_slope)


def causal_window_mask(length: int, window: int) -> np.ndarray:
    """``mask[t, s]`` is true when frame ``t`` may attend to frame ``s`` (``0 <= t - s < window``)."""
    t = np.arange(length)[:, None]
    s = np.arange(length)[None, :]
    return (t - s >= 0) & (t - s < window)


class TemporalContextAggregation(Module):
    """Single-head self-attention over a causal window with a residual connection.

    Operates time-major on [B, T, D].
    """
    def __init__(self, dim: int, window: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.window = window
        self.q_proj = Linear(dim, dim, rng=rng)
        self.k_proj = Linear(dim, dim, rng=rng)
        self.v_proj = Linear(dim, dim, rng=rng)
        self.o_proj = Linear(dim, dim, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        q, k, v = self.q_proj(x), self.k_proj(x), self.v_proj(x)
        scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(self.dim))
        mask = causal_window_mask(x.shape[1], self.window)[None]
        attn = F.softmax(scores, axis=-1, mask=np.broadcast_to(mask, scores.shape))
        return x + self.o_proj(attn @ v)


class BoneRatioHead(Module):
    """Temporal conv, mean pooling over time, dense layer and softplus: positive per-bone ratios."""
    def __init__(self, in_channels: int, hidden: int, num_bones: int, negative_slope: float,
                 rng: np.random.Generator):
        super().__init__()
        self.negative_slope = negative_slope
        self.conv = SConv1d(in_channels, hidden, 3, 1, rng=rng)
        self.proj = Linear(hidden, num_bones, rng=rng)
        # softplus(log(e - 1)) == 1
        self.proj.bias = Parameter(np.full(num_bones, math.log(math.e - 1.0)))

    def forward(self, x: Tensor) -> Tensor:
        h = F.leaky_relu(self.conv(x), self.negative_slope)
        pooled = h.mean(axis=2)
        return F.softplus(self.proj(pooled))


__all__ = [
    "get_extra_padding_for_conv1d", "SConv1d", "SConvTranspose1d", "ConvEncoder", "ConvDecoder",
    "UpsamplingHead", "KeypointExtractor", "ResidualFusionBlock", "TemporalContextAggregation",
    "BoneRatioHead", "causal_window_mask",
]
