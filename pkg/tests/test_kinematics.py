import numpy as np
import pytest
from scipy.spatial.transform import Rotation as R

from vtm.errors import DegenerateInputError, ShapeError
from vtm.processor.kinematics import (
    IDENTITY_QUAT,
    Pose,
    euler_to_quat,
    finite_differences,
    fk_positions,
    forward_kinematics,
    geodesic_angle,
    quat_canonical,
    quat_multiply,
    quat_to_euler,
    quat_to_matrix,
    rot_to_6d,
    second_differences,
    six_d_to_rot,
    sixd_to_matrix,
)
from vtm.processor.skeleton import NUM_JOINTS, canonical_skeleton


def _random_quats(rng, n):
    return quat_canonical(R.random(n, random_state=int(rng.integers(1 << 31))).as_quat()[:, [3, 0, 1, 2]])


def test_six_d_recovers_rotations(rng):
    q = _random_quats(rng, 50)
    back = six_d_to_rot(rot_to_6d(q))
    assert np.max(geodesic_angle(q, back)) < 1e-9
    assert np.all(back[:, 0] >= 0)


def test_six_d_gram_schmidt_of_perturbed_columns_is_orthonormal(rng):
    d = rot_to_6d(_random_quats(rng, 10)) + 0.1 * rng.normal(size=(10, 6))
    m = sixd_to_matrix(d)
    np.testing.assert_allclose(m @ np.swapaxes(m, -1, -2), np.broadcast_to(np.eye(3), m.shape), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(m), 1.0, atol=1e-12)


def test_six_d_rejects_degenerate_columns():
    with pytest.raises(DegenerateInputError):
        sixd_to_matrix(np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0]))
    with pytest.raises(DegenerateInputError):
        sixd_to_matrix(np.array([1.0, 0.0, 0.0, 2.0, 0.0, 0.0]))
    with pytest.raises(ShapeError):
        sixd_to_matrix(np.zeros(5))


def test_geodesic_angle_ignores_quaternion_sign(rng):
    q = _random_quats(rng, 4)
    np.testing.assert_allclose(geodesic_angle(q, -q), 0.0, atol=1e-7)
    turn = euler_to_quat(np.array([0.0, 90.0, 0.0]), "ZXY")
    assert geodesic_angle(IDENTITY_QUAT, turn) == pytest.approx(np.pi / 2)


def test_euler_round_trip_in_bvh_order(rng):
    angles = rng.uniform(-60, 60, size=(8, 3))
    np.testing.assert_allclose(quat_to_euler(euler_to_quat(angles, "ZXY"), "ZXY"), angles, atol=1e-9)


def test_quat_multiply_matches_matrix_product(rng):
    a, b = _random_quats(rng, 5), _random_quats(rng, 5)
    np.testing.assert_allclose(quat_to_matrix(quat_multiply(a, b)), quat_to_matrix(a) @ quat_to_matrix(b), atol=1e-12)


def test_fk_rest_pose_sums_offsets():
    skel = canonical_skeleton()
    rotations = np.tile(IDENTITY_QUAT, (NUM_JOINTS, 1))
    root = np.array([0.5, 1.0, -2.0])
    positions = forward_kinematics(skel, Pose(rotations, root))
    expected = np.zeros((NUM_JOINTS, 3))
    for j, p in enumerate(skel.parents):
        expected[j] = root if p < 0 else expected[p] + skel.offsets[j]
    np.testing.assert_allclose(positions, expected, atol=1e-12)


def test_fk_root_rotation_turns_the_whole_body():
    skel = canonical_skeleton()
    rotations = np.tile(IDENTITY_QUAT, (NUM_JOINTS, 1))
    rest = fk_positions(skel.parents, skel.offsets, rotations, np.zeros(3))
    rotations[0] = euler_to_quat(np.array([0.0, 0.0, 90.0]), "ZXY")
    turned = fk_positions(skel.parents, skel.offsets, rotations, np.zeros(3))
    np.testing.assert_allclose(turned, rest @ quat_to_matrix(rotations[0]).T, atol=1e-12)


def test_fk_keeps_bone_lengths(rng):
    skel = canonical_skeleton()
    rotations = _random_quats(rng, 3 * NUM_JOINTS).reshape(3, NUM_JOINTS, 4)
    positions = fk_positions(skel.parents, skel.offsets, rotations, rng.normal(size=(3, 3)))
    parents = np.array(skel.parents[1:])
    lengths = np.linalg.norm(positions[:, 1:] - positions[:, parents], axis=-1)
    np.testing.assert_allclose(lengths, np.broadcast_to(skel.bone_lengths(), lengths.shape), atol=1e-12)


def test_differences_start_at_zero():
    x = np.array([[0.0], [1.0], [3.0], [6.0]])
    np.testing.assert_array_equal(finite_differences(x)[:, 0], [0.0, 1.0, 2.0, 3.0])
    np.testing.assert_array_equal(second_differences(x)[:, 0], [0.0, 0.0, 1.0, 1.0])
    np.testing.assert_array_equal(second_differences(x[:2]), np.zeros((2, 1)))
