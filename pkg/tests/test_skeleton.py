import numpy as np
import pytest

from vtm.errors import SkeletonError, TopologyMismatchError
from vtm.processor.kinematics import IDENTITY_QUAT, fk_positions
from vtm.processor.skeleton import (
    END_EFFECTORS,
    JOINT_NAMES,
    NUM_BONES,
    NUM_JOINTS,
    PARENTS,
    TEMPLATE_OFFSETS,
    BoneRatios,
    Skeleton,
    align_motion,
    apply_ratios,
    average_skeleton,
    bone_ratios,
    canonical_joint_name,
    canonical_skeleton,
    fit_skeleton,
)
from vtm.processor.synth import random_skeleton


def test_joint_table_is_topologically_ordered():
    assert NUM_JOINTS == 24 and NUM_BONES == 23
    assert PARENTS[0] == -1
    assert all(0 <= p < j for j, p in enumerate(PARENTS) if j)
    assert len(END_EFFECTORS) == 5


@pytest.mark.parametrize("name,expected", [
    ("Pelvis", "pelvis"), ("Hips", "pelvis"), ("L_Hip", "left_hip"), ("LeftHand", "left_hand"),
    ("right-shoulder", "right_shoulder"), ("Tail", None),
])
def test_canonical_joint_name(name, expected):
    assert canonical_joint_name(name) == expected


def test_skeleton_text_round_trip_is_exact(rng):
    skel = random_skeleton(rng)
    back = Skeleton.from_text(skel.to_text())
    np.testing.assert_array_equal(back.offsets, skel.offsets)
    assert back.same_topology(skel)


def test_skeleton_validation():
    offsets = TEMPLATE_OFFSETS.copy()
    offsets[5] = 0.0
    with pytest.raises(SkeletonError):
        canonical_skeleton(offsets)
    with pytest.raises(SkeletonError):
        Skeleton(JOINT_NAMES[:-1], PARENTS[:-1], TEMPLATE_OFFSETS[:-1])
    bad_parents = list(PARENTS)
    bad_parents[3] = 7
    with pytest.raises(SkeletonError):
        Skeleton(JOINT_NAMES, bad_parents, TEMPLATE_OFFSETS)
    with pytest.raises(SkeletonError):
        Skeleton.from_text("not a skeleton")


def test_average_of_identical_skeletons_is_that_skeleton(rng):
    skel = random_skeleton(rng)
    np.testing.assert_allclose(average_skeleton([skel, skel, skel]).offsets, skel.offsets, atol=1e-12)


def test_average_uses_mean_bone_lengths(rng):
    skeletons = [random_skeleton(rng) for _ in range(4)]
    virtual = average_skeleton(skeletons)
    mean_lengths = np.mean([s.bone_lengths() for s in skeletons], axis=0)
    np.testing.assert_allclose(virtual.bone_lengths(), mean_lengths, atol=1e-12)


def test_ratios_rebuild_the_character(rng):
    skeletons = [random_skeleton(rng) for _ in range(3)]
    virtual = average_skeleton(skeletons)
    for skel in skeletons:
        rebuilt = apply_ratios(virtual, bone_ratios(skel, virtual))
        np.testing.assert_allclose(rebuilt.bone_lengths(), skel.bone_lengths(), atol=1e-12)


def test_bone_ratios_validation():
    with pytest.raises(SkeletonError):
        BoneRatios(np.ones(NUM_BONES - 1))
    ratios = np.ones(NUM_BONES)
    ratios[2] = -1.0
    with pytest.raises(SkeletonError):
        BoneRatios(ratios)
    other = Skeleton(("a",) + JOINT_NAMES[1:], PARENTS, TEMPLATE_OFFSETS)
    with pytest.raises(TopologyMismatchError):
        bone_ratios(other, canonical_skeleton())


def test_align_motion_scales_root_by_leg_length():
    source = canonical_skeleton()
    target = canonical_skeleton(TEMPLATE_OFFSETS * 1.2)
    rotations = np.tile(IDENTITY_QUAT, (4, NUM_JOINTS, 1))
    root = np.arange(12.0).reshape(4, 3)
    out_rot, out_root = align_motion(rotations, root, source, target)
    np.testing.assert_array_equal(out_rot, rotations)
    np.testing.assert_allclose(out_root, root * 1.2)


def test_fit_skeleton_recovers_bone_lengths_from_positions(rng):
    skel = random_skeleton(rng)
    rotations = np.tile(IDENTITY_QUAT, (5, NUM_JOINTS, 1))
    positions = fk_positions(skel.parents, skel.offsets, rotations, rng.normal(size=(5, 3)))
    fitted = fit_skeleton(positions)
    np.testing.assert_allclose(fitted.bone_lengths(), skel.bone_lengths(), atol=1e-12)
    with pytest.raises(SkeletonError):
        fit_skeleton(positions[0])


def test_ratios_rebuild_many_random_characters(rng):
    skeletons = [random_skeleton(rng) for _ in range(100)]
    virtual = average_skeleton(skeletons)
    worst = 0.0
    for skel in skeletons:
        rebuilt = apply_ratios(virtual, bone_ratios(skel, virtual))
        worst = max(worst, np.max(np.abs(rebuilt.bone_lengths() - skel.bone_lengths())))
    assert worst <= 1e-9
