"""Define-by-run reverse-mode differentiation over float64 numpy arrays.

A :class:`Tensor` remembers the :class:`Function` that produced it. Calling
``backward()`` on a scalar walks that graph in reverse topological order,
accumulates gradients into leaf tensors and then frees the graph.
"""

import contextlib
import threading
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording on the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Function:
    """Base class of differentiable operations.

    Subclasses implement ``forward`` on raw arrays and ``backward``, which maps
    the output gradient to one gradient (or ``None``) per input tensor.
    """

    def __init__(self, *parents: "Tensor"):
        self.parents = parents

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: ArrayLike, **kwargs) -> "Tensor":
        tensors = [x if isinstance(x, Tensor) else Tensor(x) for x in inputs]
        ctx = cls(*tensors)
        out = Tensor(ctx.forward(*[t.data for t in tensors], **kwargs))
        if is_grad_enabled() and any(t.requires_grad for t in tensors):
            out.requires_grad = True
            out._ctx = ctx
        return out


class Tensor:
    __array_priority__ = 1000

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._ctx: Optional[Function] = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        from . import ops
        return ops.Add.apply(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.Add.apply(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.Sub.apply(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.Sub.apply(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.Mul.apply(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.Mul.apply(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.Div.apply(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.Div.apply(other, self)

    def __neg__(self):
        from . import ops
        return ops.Neg.apply(self)

    def __matmul__(self, other):
        from . import ops
        return ops.MatMul.apply(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.GetItem.apply(self, index=index)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.Mean.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.Reshape.apply(self, shape=shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return ops.Transpose.apply(self, axes=axes)

    # differentiation --------------------------------------------------
    def backward(self, grad: Optional[np.ndarray] = None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _toposort(self)
        grads = _backprop(order, self, grad)
        for node in order:
            if node._ctx is None and id(node) in grads:
                node.grad = grads[id(node)] if node.grad is None else node.grad + grads[id(node)]
        _free(order)


def _toposort(root: Tensor) -> List[Tensor]:
    """Post-order over the graph: every node appears after all of its inputs."""
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in reversed(node._ctx.parents):
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def _backprop(order: List[Tensor], root: Tensor, seed: np.ndarray) -> Dict[int, np.ndarray]:
    grads: Dict[int, np.ndarray] = {id(root): np.asarray(seed, dtype=np.float64)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._ctx is None:
            continue
        parent_grads = node._ctx.backward(g)
        if not isinstance(parent_grads, tuple):
            parent_grads = (parent_grads,)
        for parent, pg in zip(node._ctx.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    return grads


def _free(order: List[Tensor]):
    for node in order:
        node._ctx = None


def grad(output: Tensor, inputs: Sequence[Tensor], retain_graph: bool = False) -> List[np.ndarray]:
    """Gradients of scalar ``output`` w.r.t. ``inputs`` without touching ``.grad``.

    Inputs the output does not depend on receive zeros.
    """
    if output.data.size != 1:
        raise ShapeError(f"grad() needs a scalar output, got shape {output.shape}")
    order = _toposort(output)
    grads = _backprop(order, output, np.ones_like(output.data))
    result = [grads.get(id(t), np.zeros_like(t.data)) for t in inputs]
    if not retain_graph:
        _free(order)
    return result


def tensor(data: ArrayLike, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


__all__ = ["Tensor", "Function", "grad", "no_grad", "is_grad_enabled", "tensor"]
