import numpy as np
import pytest

from vtm.autodiff.tensor import Tensor
from vtm.errors import ShapeError
from vtm.modular.losses import (
    JointWeights,
    LossWeights,
    TpmaeLosses,
    VtmLosses,
    alignment_loss,
    bone_loss,
    contrastive_alignment_loss,
    manifold_alignment_loss,
    motion_rec_loss,
    smoothness_loss,
    tpmae_losses,
    vtm_total_loss,
)
from vtm.processor.skeleton import JOINT_INDEX


def _smooth_l1(a, b, beta=1.0):
    d = np.abs(a - b)
    return float(np.mean(np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)))


def _motion(rng, batch=2, frames=8, scale=1.0):
    return (Tensor(scale * rng.normal(size=(batch, frames, 8))), scale * rng.normal(size=(batch, frames, 8)),
            Tensor(scale * rng.normal(size=(batch, frames, 23, 12))), scale * rng.normal(size=(batch, frames, 23, 12)))


def test_default_joint_weights():
    w = JointWeights()
    assert w.root == 2.0
    assert w.non_root[JOINT_INDEX["left_hand"] - 1] == 1.5
    assert w.non_root[JOINT_INDEX["head"] - 1] == 1.5
    assert w.non_root[JOINT_INDEX["spine1"] - 1] == 1.0
    assert np.sum(w.non_root == 1.5) == 5
    with pytest.raises(ValueError):
        w.non_root[0] = 3.0


def test_motion_rec_loss_matches_numpy(rng):
    pr, tr, pn, tn = _motion(rng)
    w = JointWeights()
    expected = (_smooth_l1(pr.data * 2.0, tr * 2.0)
                + _smooth_l1(pn.data * w.non_root[:, None], tn * w.non_root[:, None]))
    assert motion_rec_loss(pr, tr, pn, tn, w).item() == pytest.approx(expected, rel=1e-12)


def test_doubling_weights_on_the_linear_branch(rng):
    # every weighted difference exceeds beta, so each term becomes mean|w d| - beta / 2
    beta = 0.5
    pr, tr, pn, tn = _motion(rng)
    tr = pr.data + np.sign(rng.normal(size=tr.shape)) * rng.uniform(1.0, 2.0, size=tr.shape)
    tn = pn.data + np.sign(rng.normal(size=tn.shape)) * rng.uniform(1.0, 2.0, size=tn.shape)
    w = JointWeights()
    single = motion_rec_loss(pr, tr, pn, tn, w, beta).item()
    double = motion_rec_loss(pr, tr, pn, tn, w.scaled(2.0), beta).item()
    assert double == pytest.approx(2.0 * single + 2 * 0.5 * beta, rel=1e-12)


def test_smoothness_loss_matches_numpy(rng):
    pr, tr, pn, tn = _motion(rng, frames=6)
    w = JointWeights()

    def vel(x):
        return x[:, 1:] - x[:, :-1]

    expected = 0.0
    for p_root, t_root, p_nr, t_nr in ((vel(pr.data), vel(tr), vel(pn.data), vel(tn)),
                                       (vel(vel(pr.data)), vel(vel(tr)), vel(vel(pn.data)), vel(vel(tn)))):
        expected += _smooth_l1(p_root * 2.0, t_root * 2.0) + _smooth_l1(p_nr, t_nr)
    assert smoothness_loss(pr, tr, pn, tn, w).item() == pytest.approx(expected, rel=1e-12)


def test_smoothness_needs_three_frames(rng):
    pr, tr, pn, tn = _motion(rng, frames=2)
    with pytest.raises(ShapeError):
        smoothness_loss(pr, tr, pn, tn)


def test_losses_vanish_on_perfect_predictions(rng):
    pr, _, pn, _ = _motion(rng)
    losses = tpmae_losses(pr, pr.data.copy(), pn, pn.data.copy())
    assert losses.total.item() == 0.0
    assert losses.values() == {"L_rec": 0.0, "L_s": 0.0}


def test_shape_mismatches_raise(rng):
    pr, tr, pn, tn = _motion(rng)
    with pytest.raises(ShapeError):
        motion_rec_loss(pr, tr[:, :4], pn, tn)
    with pytest.raises(ShapeError):
        bone_loss(Tensor(np.ones((2, 23))), np.ones((2, 22)))


def test_manifold_alignment_is_smooth_l1_per_part(rng):
    vu, mu = rng.normal(size=(2, 4, 6)), rng.normal(size=(2, 4, 6))
    vl, ml = rng.normal(size=(2, 4, 5)), rng.normal(size=(2, 4, 5))
    value = manifold_alignment_loss(Tensor(vu), mu, Tensor(vl), ml).item()
    assert value == pytest.approx(_smooth_l1(vu, mu) + _smooth_l1(vl, ml), rel=1e-12)
    assert alignment_loss(Tensor(vu), mu, Tensor(vl), ml, kind="l1").item() == pytest.approx(value)


def test_contrastive_alignment_matches_numpy(rng):
    vu, mu = rng.normal(size=(3, 4, 6)), rng.normal(size=(3, 4, 6))
    vl, ml = rng.normal(size=(3, 4, 5)), rng.normal(size=(3, 4, 5))

    def part(v, m):
        v = v.reshape(3, -1)
        m = m.reshape(3, -1)
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
        m = m / np.linalg.norm(m, axis=1, keepdims=True)
        logits = v @ m.T / 0.07

        def ce(x):
            x = x - x.max(axis=1, keepdims=True)
            logp = x - np.log(np.exp(x).sum(axis=1, keepdims=True))
            return -np.mean(np.diag(logp))

        return 0.5 * (ce(logits) + ce(logits.T))

    value = contrastive_alignment_loss(Tensor(vu), Tensor(mu), Tensor(vl), Tensor(ml)).item()
    assert value == pytest.approx(part(vu, mu) + part(vl, ml), rel=1e-10)


def test_contrastive_alignment_prefers_matched_pairs(rng):
    z = rng.normal(size=(4, 2, 6))
    zl = rng.normal(size=(4, 2, 5))
    matched = contrastive_alignment_loss(Tensor(z), Tensor(z), Tensor(zl), Tensor(zl)).item()
    shuffled = contrastive_alignment_loss(Tensor(z), Tensor(z[::-1].copy()), Tensor(zl), Tensor(zl[::-1].copy())).item()
    assert matched < shuffled


def test_one_part_alignment_uses_the_upper_latents_only(rng):
    vu, mu = rng.normal(size=(3, 4, 6)), rng.normal(size=(3, 4, 6))
    value = manifold_alignment_loss(Tensor(vu), mu, None, None).item()
    assert value == pytest.approx(_smooth_l1(vu, mu), rel=1e-12)
    both = alignment_loss(Tensor(vu), Tensor(mu), None, None, kind="l1+contrastive").item()
    assert both > value
    with pytest.raises(ShapeError):
        manifold_alignment_loss(Tensor(vu), mu, None, rng.normal(size=(3, 4, 5)))


def test_unknown_alignment_kind(rng):
    z = Tensor(np.ones((1, 2, 3)))
    with pytest.raises(ValueError):
        alignment_loss(z, z, z, z, kind="cosine")


def test_total_loss_is_the_weighted_sum(rng):
    scalars = [Tensor(np.array(v)) for v in (0.5, 1.5, 2.0, 0.25, 3.0, 4.0)]
    losses = VtmLosses(alignment=scalars[0], bone=scalars[1], prediction=scalars[2], smoothness=scalars[3],
                       motion=TpmaeLosses(scalars[4], scalars[5]))
    weights = LossWeights(alignment=2.0, bone=0.5, prediction=1.0, smoothness=4.0, motion=0.1)
    expected = 0.5 * 2.0 + 1.5 * 0.5 + 2.0 * 1.0 + 0.25 * 4.0 + (3.0 + 4.0) * 0.1
    assert vtm_total_loss(losses, weights).item() == pytest.approx(expected)
    assert vtm_total_loss(losses).item() == pytest.approx(0.5 + 1.5 + 2.0 + 0.25 + 7.0)
    assert list(losses.values()) == ["L_rec", "L_s", "L_ma", "L_b", "L_pred", "L_s_v"]
