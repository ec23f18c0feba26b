import threading

import numpy as np
import pytest

from vtm.autodiff import functional as F
from vtm.autodiff.gradcheck import gradcheck
from vtm.autodiff.nn import Conv1d, Linear, Module, ModuleList, Parameter, component_rng
from vtm.autodiff.ops import record_kinks
from vtm.autodiff.optim import AdamW
from vtm.autodiff.tensor import Tensor, grad, is_grad_enabled, no_grad
from vtm.errors import ShapeError
from vtm.training.gradcheck_suite import op_checks


def test_backward_accumulates_leaf_gradients():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    y = (x * x + 2.0 * x).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data + 2.0)

    (x * 3.0).sum().backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data + 5.0)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_grad_returns_zeros_for_unused_inputs():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    ga, gb = grad((a * 4.0).sum(), [a, b])
    np.testing.assert_allclose(ga, 4.0)
    np.testing.assert_array_equal(gb, np.zeros(3))
    assert a.grad is None


def test_broadcast_gradients_are_reduced():
    a = Tensor(np.ones((3, 4)), requires_grad=True)
    b = Tensor(np.ones((4,)), requires_grad=True)
    c = Tensor(np.ones((3, 1)), requires_grad=True)
    ga, gb, gc = grad(((a + b) * c).sum(), [a, b, c])
    assert ga.shape == (3, 4)
    np.testing.assert_allclose(gb, np.full(4, 3.0))
    np.testing.assert_allclose(gc, np.full((3, 1), 8.0))


def test_shared_subexpression_gradient():
    x = Tensor(np.array(2.0), requires_grad=True)
    y = x * x
    (g,) = grad(y * y, [x])
    np.testing.assert_allclose(g, 4.0 * 2.0 ** 3)


def test_no_grad_is_thread_local():
    seen = {}

    def worker():
        seen["worker"] = is_grad_enabled()

    with no_grad():
        assert not is_grad_enabled()
        thread = threading.Thread(target=worker)
        thread.start()
        thread.join()
        x = Tensor(np.ones(2), requires_grad=True)
        assert not (x * 2.0).requires_grad
    assert seen["worker"] is True
    assert is_grad_enabled()


def test_fancy_index_gradient_accumulates_repeats():
    x = Tensor(np.arange(5.0), requires_grad=True)
    (g,) = grad(x[np.array([0, 2, 2])].sum(), [x])
    np.testing.assert_array_equal(g, [1.0, 0.0, 2.0, 0.0, 0.0])


def test_masked_softmax_zeroes_disallowed_entries():
    x = Tensor(np.zeros((3, 3)))
    mask = np.tril(np.ones((3, 3), dtype=bool))
    y = F.softmax(x, axis=-1, mask=mask).data
    np.testing.assert_allclose(y[0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(y[2], [1 / 3, 1 / 3, 1 / 3])


def test_smooth_l1_branches():
    pred = Tensor(np.array([0.5, 3.0]))
    loss = F.smooth_l1_loss(pred, np.zeros(2), beta=1.0).item()
    assert loss == pytest.approx((0.5 * 0.25 + 2.5) / 2)
    with pytest.raises(ShapeError):
        F.smooth_l1_loss(pred, np.zeros(3))


def test_conv_output_lengths():
    x = Tensor(np.ones((2, 3, 10)))
    w = Tensor(np.ones((4, 3, 3)))
    assert F.conv1d(x, w, stride=2, padding=1).shape == (2, 4, 5)
    wt = Tensor(np.ones((3, 4, 4)))
    assert F.conv_transpose1d(x, wt, stride=2, padding=1).shape == (2, 4, 20)
    with pytest.raises(ShapeError):
        F.conv1d(Tensor(np.ones((2, 5, 10))), w)


def test_cross_entropy_of_uniform_logits():
    logits = Tensor(np.zeros((4, 5)))
    assert F.cross_entropy(logits, np.arange(4)).item() == pytest.approx(np.log(5.0))


def test_every_op_passes_gradcheck():
    for report in op_checks(seed=3):
        assert report.passed(1e-4), report.format()


def test_gradcheck_flags_a_wrong_gradient():
    from vtm.autodiff.tensor import Function

    class BadSquare(Function):
        def forward(self, x):
            self.x = x
            return x * x

        def backward(self, g):
            return g * self.x

    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    report = gradcheck(lambda: BadSquare.apply(x).sum(), [("x", x)])
    assert not report.passed(1e-4)


def test_gradcheck_skips_entries_across_a_kink():
    x = Tensor(np.array([1e-8, 1.0]), requires_grad=True)
    report = gradcheck(lambda: F.leaky_relu(x, 0.2).sum(), [("x", x)], eps=1e-6)
    assert report.tensors[0].skipped == 1
    assert report.passed(1e-6)


def test_record_kinks_logs_leaky_relu_patterns():
    with record_kinks() as log:
        F.leaky_relu(Tensor(np.array([-1.0, 1.0])))
    assert len(log) == 1


class _Pair(Module):
    def __init__(self):
        super().__init__()
        self.first = Linear(3, 2, rng=component_rng(0, "first"))
        self.blocks = ModuleList([Conv1d(2, 2, 3, rng=component_rng(0, "b0"))])


def test_module_walks_and_state_dict():
    m = _Pair()
    names = [n for n, _ in m.named_parameters()]
    assert names == ["first.weight", "first.bias", "blocks.0.weight", "blocks.0.bias"]
    state = m.state_dict()
    other = _Pair()
    for p in other.parameters():
        p.data = np.zeros_like(p.data)
    other.load_state_dict(state)
    for (_, a), (_, b) in zip(m.named_parameters(), other.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data)

    state["first.weight"] = np.zeros((3, 3))
    with pytest.raises(ShapeError):
        other.load_state_dict(state)
    with pytest.raises(ShapeError):
        other.load_state_dict({"first.weight": np.zeros((2, 3))})


def test_component_rng_streams_are_independent_of_each_other():
    a = component_rng(5, "encoder").normal(size=4)
    b = component_rng(5, "decoder").normal(size=4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, component_rng(5, "encoder").normal(size=4))


def test_adamw_converges_on_a_quadratic():
    target = np.array([0.3, -0.7])
    w = Parameter(np.zeros(2))
    opt = AdamW([w], lr=0.1, weight_decay=0.0)
    for _ in range(200):
        loss = ((w - target) * (w - target)).sum()
        opt.step(grad(loss, [w]))
    assert np.max(np.abs(w.data - target)) < 1e-3


def test_adamw_decoupled_weight_decay_without_gradient():
    w = Parameter(np.array([1.0]))
    opt = AdamW([w], lr=0.1, weight_decay=0.5)
    opt.step([np.zeros(1)])
    np.testing.assert_allclose(w.data, [0.95])
