"""Central finite-difference check of analytic gradients."""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from transformers.utils import logging

from .ops import record_kinks
from .tensor import Tensor, grad, no_grad

logger = logging.get_logger(__name__)


@dataclass
class TensorCheck:
    name: str
    checked: int
    skipped: int
    max_abs_error: float
    relative_error: float


@dataclass
class GradcheckReport:
    label: str = ""
    tensors: List[TensorCheck] = field(default_factory=list)

    @property
    def max_relative_error(self) -> float:
        return max((t.relative_error for t in self.tensors), default=0.0)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_relative_error < tol

    def format(self) -> str:
        lines = [f"{self.label or 'graph'}: max relative error {self.max_relative_error:.3e}"]
        for t in self.tensors:
            lines.append(f"  {t.name}: rel {t.relative_error:.3e} abs {t.max_abs_error:.3e} "
                         f"({t.checked} checked, {t.skipped} skipped)")
        return "\n".join(lines)


def _evaluate(fn: Callable[[], Tensor]) -> Tuple[float, List[np.ndarray]]:
    with no_grad(), record_kinks() as kinks:
        value = float(fn().data)
    return value, kinks


def _same_pattern(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tuple[str, Tensor]], eps: float = 1e-6,
              max_entries: Optional[int] = None, seed: int = 0, floor: float = 1e-5,
              label: str = "") -> GradcheckReport:
    """Compare analytic gradients of the scalar ``fn()`` with central differences.

    ``fn`` rebuilds the graph from the current parameter values. For every
    parameter tensor up to ``max_entries`` entries are sampled (all of them when
    ``None``). Entries whose perturbation flips a piecewise-linear activation
    are skipped since the function is not differentiable across the flip.
    The relative error of a tensor is
    ``max|g_a - g_n| / max(max|g_a|, max|g_n|, floor)``.
    """
    params = list(params)
    analytic = grad(fn(), [p for _, p in params])
    _, base_kinks = _evaluate(fn)
    rng = np.random.default_rng(seed)
    report = GradcheckReport(label=label)

    for (name, p), g in zip(params, analytic):
        flat = p.data.reshape(-1)
        if max_entries is None or max_entries >= flat.size:
            indices = np.arange(flat.size)
        else:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        g_flat = g.reshape(-1)
        a_vals, n_vals = [], []
        skipped = 0
        for i in indices:
            original = flat[i]
            flat[i] = original + eps
            f_plus, k_plus = _evaluate(fn)
            flat[i] = original - eps
            f_minus, k_minus = _evaluate(fn)
            flat[i] = original
            if not (_same_pattern(k_plus, base_kinks) and _same_pattern(k_minus, base_kinks)):
                skipped += 1
                continue
            a_vals.append(g_flat[i])
            n_vals.append((f_plus - f_minus) / (2.0 * eps))
        a_arr, n_arr = np.array(a_vals), np.array(n_vals)
        if a_arr.size:
            abs_err = float(np.max(np.abs(a_arr - n_arr)))
            scale = max(float(np.max(np.abs(a_arr))), float(np.max(np.abs(n_arr))), floor)
            rel = abs_err / scale
        else:
            abs_err, rel = 0.0, 0.0
        report.tensors.append(TensorCheck(name, int(a_arr.size), skipped, abs_err, rel))
        if skipped:
            logger.info(f"{label or 'gradcheck'} {name}: skipped {skipped} entries at activation kinks")
    return report


__all__ = ["gradcheck", "GradcheckReport", "TensorCheck"]
