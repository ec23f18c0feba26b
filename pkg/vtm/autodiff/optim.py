"""AdamW with decoupled weight decay."""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import ShapeError
from .nn import Parameter


@dataclass
class AdamWState:
    lr: float = 1e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    exp_avg: List[np.ndarray] = field(default_factory=list)
    exp_avg_sq: List[np.ndarray] = field(default_factory=list)


def adamw_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
               state: AdamWState) -> Tuple[List[np.ndarray], AdamWState]:
    """One AdamW update. Returns new parameter arrays; ``state`` is advanced in place."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.exp_avg:
        state.exp_avg = [np.zeros_like(p) for p in params]
        state.exp_avg_sq = [np.zeros_like(p) for p in params]
    beta1, beta2 = state.betas
    state.step += 1
    bias_correction1 = 1.0 - beta1 ** state.step
    bias_correction2 = 1.0 - beta2 ** state.step
    step_size = state.lr / bias_correction1

    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.exp_avg[i].shape:
            raise ShapeError(f"parameter {i}: shape {p.shape} vs gradient {np.shape(g)}")
        p = p * (1.0 - state.lr * state.weight_decay)
        m = state.exp_avg[i] = beta1 * state.exp_avg[i] + (1.0 - beta1) * g
        v = state.exp_avg_sq[i] = beta2 * state.exp_avg_sq[i] + (1.0 - beta2) * g * g
        denom = np.sqrt(v) / np.sqrt(bias_correction2) + state.eps
        updated.append(p - step_size * m / denom)
    return updated, state


class AdamW:
    """Stateful wrapper over :func:`adamw_step` for a list of parameters."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = list(params)
        self.state = AdamWState(lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float):
        self.state.lr = value

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, grads: Sequence[np.ndarray] = None):
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new_values, _ = adamw_step([p.data for p in self.params], grads, self.state)
        for p, value in zip(self.params, new_values):
            p.data = value


__all__ = ["AdamW", "AdamWState", "adamw_step"]
