import numpy as np
import pytest

from vtm.autodiff import functional as F
from vtm.autodiff.tensor import Tensor, grad

torch = pytest.importorskip("torch")


def _pair(rng, *shape):
    data = rng.normal(size=shape)
    return data, Tensor(data, requires_grad=True), torch.tensor(data, requires_grad=True)


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (3, 2)])
def test_conv1d_matches_torch(rng, stride, padding):
    x, tx, ox = _pair(rng, 2, 3, 11)
    w, tw, ow = _pair(rng, 4, 3, 3)
    b, tb, ob = _pair(rng, 4)
    ours = F.conv1d(tx, tw, tb, stride=stride, padding=padding)
    ref = torch.nn.functional.conv1d(ox, ow, ob, stride=stride, padding=padding)
    np.testing.assert_allclose(ours.data, ref.detach().numpy(), atol=1e-10)

    proj = rng.normal(size=ours.shape)
    grads = grad((ours * proj).sum(), [tx, tw, tb])
    (ref * torch.tensor(proj)).sum().backward()
    for g, t in zip(grads, (ox, ow, ob)):
        np.testing.assert_allclose(g, t.grad.numpy(), atol=1e-9)


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (4, 0)])
def test_conv_transpose1d_matches_torch(rng, stride, padding):
    x, tx, ox = _pair(rng, 2, 3, 6)
    w, tw, ow = _pair(rng, 3, 5, 4)
    ours = F.conv_transpose1d(tx, tw, stride=stride, padding=padding)
    ref = torch.nn.functional.conv_transpose1d(ox, ow, stride=stride, padding=padding)
    np.testing.assert_allclose(ours.data, ref.detach().numpy(), atol=1e-10)

    proj = rng.normal(size=ours.shape)
    gx, gw = grad((ours * proj).sum(), [tx, tw])
    (ref * torch.tensor(proj)).sum().backward()
    np.testing.assert_allclose(gx, ox.grad.numpy(), atol=1e-9)
    np.testing.assert_allclose(gw, ow.grad.numpy(), atol=1e-9)


def test_smooth_l1_and_log_softmax_match_torch(rng):
    p, tp, op = _pair(rng, 5, 4)
    target = rng.normal(size=(5, 4))
    ours = F.smooth_l1_loss(tp, target, beta=0.5)
    ref = torch.nn.functional.smooth_l1_loss(op, torch.tensor(target), beta=0.5)
    assert ours.item() == pytest.approx(ref.item(), abs=1e-12)
    (g,) = grad(ours, [tp])
    ref.backward()
    np.testing.assert_allclose(g, op.grad.numpy(), atol=1e-12)

    logits = rng.normal(size=(3, 7))
    np.testing.assert_allclose(
        F.log_softmax(Tensor(logits)).data,
        torch.log_softmax(torch.tensor(logits), dim=-1).numpy(),
        atol=1e-12,
    )
