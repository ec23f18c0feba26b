import numpy as np
import pytest

from vtm.errors import ShapeError
from vtm.processor.kinematics import IDENTITY_QUAT, fk_positions
from vtm.processor.representation import (
    CANONICAL_PARTITION,
    ONE_PART_PARTITION,
    POSITION,
    BodyPartition,
    KeypointNormalizer,
    KeypointSequence,
    MotionNormalizer,
    MotionSequence,
    PreparedSequence,
    TrainingWindow,
    build_motion_sequence,
    default_partition,
    make_windows,
    merge_parts,
    motion_positions_from_rotations,
    project_keypoints,
    split_parts,
    window_count,
)
from vtm.processor.camera import to_camera_space
from vtm.processor.skeleton import NUM_JOINTS, ROOT, BoneRatios
from vtm.processor.synth import generate_motion, random_skeleton


def _sequence(rng, camera, frames=40, sid="seq"):
    skel = random_skeleton(rng)
    rotations, root = generate_motion(rng, skel, frames)
    motion = build_motion_sequence(rotations, root, skel, camera, skeleton_id=sid)
    return skel, rotations, root, PreparedSequence(sid, motion, project_keypoints(motion, camera), BoneRatios())


def test_canonical_partition_sizes():
    assert CANONICAL_PARTITION.num_upper == 16
    assert CANONICAL_PARTITION.num_lower == 9
    assert BodyPartition.from_dict(CANONICAL_PARTITION.to_dict()) == CANONICAL_PARTITION


def test_one_part_partition_holds_every_joint_in_the_first_part(rng):
    assert (ONE_PART_PARTITION.num_upper, ONE_PART_PARTITION.num_lower) == (NUM_JOINTS, 1)
    assert default_partition(True) is CANONICAL_PARTITION
    assert default_partition(False) is ONE_PART_PARTITION
    frames = rng.normal(size=(3, NUM_JOINTS, 12))
    upper, lower = split_parts(frames, ONE_PART_PARTITION)
    np.testing.assert_array_equal(lower[:, 0], frames[:, ROOT])
    np.testing.assert_array_equal(merge_parts(upper, lower, ONE_PART_PARTITION), frames)


def test_partition_validation():
    with pytest.raises(ShapeError):
        BodyPartition((0, 1, 2), (0, 3))
    upper = CANONICAL_PARTITION.upper_indices[1:] + (ROOT,)
    with pytest.raises(ShapeError):
        BodyPartition(upper, CANONICAL_PARTITION.lower_indices)


def test_split_then_merge_restores_frames(rng):
    frames = rng.normal(size=(5, NUM_JOINTS, 12))
    upper, lower = split_parts(frames)
    assert upper.shape == (5, 16, 12) and lower.shape == (5, 9, 12)
    np.testing.assert_array_equal(upper[:, 0], lower[:, 0])
    np.testing.assert_array_equal(merge_parts(upper, lower), frames)


def test_motion_sequence_matches_camera_space_fk(rng, camera):
    skel, rotations, root, seq = _sequence(rng, camera)
    world = fk_positions(skel.parents, skel.offsets, rotations, root)
    np.testing.assert_allclose(seq.motion.positions, to_camera_space(world, camera), atol=1e-10)
    np.testing.assert_allclose(motion_positions_from_rotations(seq.motion.frames, skel), seq.motion.positions,
                               atol=1e-10)
    np.testing.assert_array_equal(seq.motion.velocities[0], 0.0)
    np.testing.assert_allclose(seq.motion.velocities[1:], np.diff(seq.motion.positions, axis=0), atol=1e-12)


def test_keypoints_carry_pixel_deltas(rng, camera):
    _, _, _, seq = _sequence(rng, camera)
    kp = seq.keypoints.frames
    assert kp.shape == (40, NUM_JOINTS, 4)
    np.testing.assert_allclose(kp[1:, :, 2:], np.diff(kp[:, :, :2], axis=0), atol=1e-9)


@pytest.mark.parametrize("frames", [32, 33, 35, 36, 64, 101, 200])
def test_window_count_matches_enumeration(rng, camera, frames):
    _, _, _, seq = _sequence(rng, camera, frames=frames)
    windows = make_windows([seq])
    assert len(windows) == window_count(frames) == len(range(0, frames - 32 + 1, 4))
    assert [w.offset for w in windows] == list(range(0, frames - 32 + 1, 4))
    last = windows[-1]
    np.testing.assert_array_equal(last.motion.frames, seq.motion.frames[last.offset:last.offset + 32])


def test_short_sequences_yield_no_windows(camera):
    motion = MotionSequence(np.zeros((20, NUM_JOINTS, 12)))
    seq = PreparedSequence("short", motion, KeypointSequence(np.zeros((20, NUM_JOINTS, 4))), BoneRatios())
    assert make_windows([seq]) == []
    assert window_count(20) == 0


def test_window_validation():
    motion = MotionSequence(np.zeros((30, NUM_JOINTS, 12)))
    keypoints = KeypointSequence(np.zeros((30, NUM_JOINTS, 4)))
    with pytest.raises(ShapeError):
        TrainingWindow(motion, keypoints, BoneRatios())
    with pytest.raises(ShapeError):
        MotionSequence(np.zeros((4, NUM_JOINTS, 9)))


def test_motion_normalizer_standardises_and_inverts(rng):
    frames = [rng.normal(loc=2.0, scale=3.0, size=(50, NUM_JOINTS, 12)) for _ in range(3)]
    norm = MotionNormalizer.fit(frames)
    z = norm.normalize(np.concatenate(frames))
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-10)
    np.testing.assert_allclose(norm.denormalize(z), np.concatenate(frames), atol=1e-10)


def test_motion_normalizer_floors_constant_channels():
    frames = np.ones((10, NUM_JOINTS, 12))
    norm = MotionNormalizer.fit([frames])
    np.testing.assert_array_equal(norm.std, 1e-3)
    np.testing.assert_array_equal(norm.normalize(frames), 0.0)


def test_keypoint_normalizer_maps_image_to_unit_box():
    norm = KeypointNormalizer(1920.0, 1080.0)
    frames = np.zeros((1, NUM_JOINTS, 4))
    frames[0, 0] = [1920.0, 1080.0, 96.0, 54.0]
    frames[0, 1] = [960.0, 540.0, 0.0, 0.0]
    out = norm.normalize(frames)
    np.testing.assert_allclose(out[0, 0], [1.0, 1.0, 0.1, 0.1])
    np.testing.assert_allclose(out[0, 1], [0.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(norm.denormalize(out), frames)
