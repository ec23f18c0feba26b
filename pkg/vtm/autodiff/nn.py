"""Module containers and parameterised layers for the autodiff engine."""

import math
import zlib
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..errors import ShapeError
from . import functional as F
from .tensor import Tensor


def component_rng(seed: int, name: str) -> np.random.Generator:
    """Generator derived from ``seed`` and a component name.

    Each named component draws from its own stream, so changing the width of
    one layer never shifts the initial values of another.
    """
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def kaiming_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int,
                    negative_slope: float = 0.2) -> np.ndarray:
    gain = math.sqrt(2.0 / (1.0 + negative_slope ** 2))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)

    def __repr__(self):
        return f"Parameter(shape={self.shape})"


class Module:
    """Minimal ``torch.nn.Module`` analogue: attribute registration and parameter walks."""

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, p in self._parameters.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True):
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise ShapeError(f"state dict mismatch: missing={missing} unexpected={unexpected}")
        for name, value in state.items():
            if name not in own:
                continue
            value = np.asarray(value, dtype=np.float64)
            if value.shape != own[name].shape:
                raise ShapeError(f"parameter {name}: expected shape {own[name].shape}, got {value.shape}")
            own[name].data = value.copy()


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: List[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module):
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, idx):
        return self._items[idx]


class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1,
                 padding: int = 0, bias: bool = True, rng: Optional[np.random.Generator] = None,
                 zero_bias: bool = False):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel_size, self.stride, self.padding = kernel_size, stride, padding
        fan_in = in_channels * kernel_size
        self.weight = Parameter(kaiming_uniform(rng, (out_channels, in_channels, kernel_size), fan_in))
        if bias:
            bound = 1.0 / math.sqrt(fan_in)
            self.bias = Parameter(np.zeros(out_channels) if zero_bias else rng.uniform(-bound, bound, out_channels))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1,
                 padding: int = 0, bias: bool = True, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel_size, self.stride, self.padding = kernel_size, stride, padding
        # each output sample sees about in_channels * kernel_size / stride inputs
        fan_in = max(1, in_channels * kernel_size // stride)
        self.weight = Parameter(kaiming_uniform(rng, (in_channels, out_channels, kernel_size), fan_in))
        if bias:
            bound = 1.0 / math.sqrt(fan_in)
            self.bias = Parameter(rng.uniform(-bound, bound, out_channels))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, bias: bool = True,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(kaiming_uniform(rng, (out_features, in_features), in_features))
        if bias:
            bound = 1.0 / math.sqrt(in_features)
            self.bias = Parameter(rng.uniform(-bound, bound, out_features))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


__all__ = ["Module", "ModuleList", "Parameter", "Conv1d", "ConvTranspose1d", "Linear",
           "component_rng", "kaiming_uniform"]
