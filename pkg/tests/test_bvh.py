import numpy as np
import pytest

from vtm.errors import BvhMismatchError, BvhSyntaxError, TopologyMismatchError
from vtm.processor.bvh import (
    POSITION_CHANNELS,
    ROTATION_CHANNELS,
    BvhDocument,
    BvhJoint,
    load_bvh,
    motion_from_bvh,
    motion_to_bvh,
    parse_bvh,
    save_bvh,
    write_bvh,
)
from vtm.processor.kinematics import fk_positions, geodesic_angle
from vtm.processor.synth import FRAME_TIME, generate_motion, random_skeleton

TINY = """HIERARCHY
ROOT Hips
{
  OFFSET 0.0 90.0 0.0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Spine
  {
    OFFSET 0.0 10.0 0.0
    CHANNELS 3 Xrotation Yrotation Zrotation
    End Site
    {
      OFFSET 0.0 5.0 0.0
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.033333
1.0 2.0 3.0 0.0 0.0 0.0 10.0 0.0 0.0
1.5 2.0 3.0 0.0 0.0 0.0 20.0 0.0 0.0
"""


def test_parse_converts_lengths_to_meters():
    doc = parse_bvh(TINY)
    assert [j.name for j in doc.joints] == ["Hips", "Spine", "Spine_end"]
    assert doc.joints[2].is_end_site and doc.joints[2].parent == 1
    np.testing.assert_allclose(doc.joints[0].offset, [0.0, 0.9, 0.0])
    np.testing.assert_allclose(doc.frames[0, :3], [0.01, 0.02, 0.03])
    assert doc.joints[1].rotation_order == "XYZ"
    assert doc.num_frames == 2


def test_parse_accepts_crlf():
    assert parse_bvh(TINY.replace("\n", "\r\n")).equals(parse_bvh(TINY))


def test_write_then_parse_is_stable():
    doc = parse_bvh(TINY)
    text = write_bvh(doc)
    assert parse_bvh(text).equals(doc)
    assert write_bvh(parse_bvh(text)) == text


@pytest.mark.parametrize("broken,error", [
    (TINY.replace("MOTION", "MOTON"), BvhSyntaxError),
    (TINY.replace("Frames: 2", "Frames: 3"), BvhMismatchError),
    (TINY.replace("1.5 2.0 3.0", "1.5 2.0"), BvhMismatchError),
    (TINY.replace("CHANNELS 3 Xrotation Yrotation Zrotation", "CHANNELS 2 Xrotation Yrotation"), BvhSyntaxError),
    (TINY.replace("Frame Time: 0.033333", "Frame Time: 0"), BvhSyntaxError),
    (TINY.replace("  }\n}\nMOTION", "  }\nMOTION"), BvhSyntaxError),
    (TINY.replace("10.0 0.0 0.0\n1.5", "abc 0.0 0.0\n1.5"), BvhSyntaxError),
])
def test_parse_errors(broken, error):
    with pytest.raises(error):
        parse_bvh(broken)


def test_syntax_errors_report_the_line():
    with pytest.raises(BvhSyntaxError) as info:
        parse_bvh(TINY.replace("OFFSET 0.0 10.0 0.0", "OFFSET 0.0 ten 0.0"))
    assert info.value.line == 8


def test_non_canonical_hierarchy_is_a_topology_mismatch():
    with pytest.raises(TopologyMismatchError):
        motion_from_bvh(parse_bvh(TINY))


def test_canonical_motion_survives_a_file_round_trip(rng, tmp_path):
    skel = random_skeleton(rng)
    rotations, root = generate_motion(rng, skel, 6)
    path = str(tmp_path / "walk.bvh")
    save_bvh(path, motion_to_bvh(skel, rotations, root, FRAME_TIME))

    rot_back, root_back, skel_back = motion_from_bvh(load_bvh(path))
    assert np.max(geodesic_angle(rotations, rot_back)) < 1e-5
    np.testing.assert_allclose(root_back, root, atol=1e-7)
    np.testing.assert_allclose(skel_back.offsets, skel.offsets, atol=1e-7)
    before = fk_positions(skel.parents, skel.offsets, rotations, root)
    after = fk_positions(skel_back.parents, skel_back.offsets, rot_back, root_back)
    np.testing.assert_allclose(after, before, atol=1e-5)


def _shuffled(rng, channels):
    return tuple(str(c) for c in rng.permutation(channels))


def _random_document(rng) -> BvhDocument:
    joints = []

    def add(parent, depth):
        index = len(joints)
        if parent is None:
            channels = POSITION_CHANNELS + _shuffled(rng, ROTATION_CHANNELS)
        elif rng.random() < 0.2:
            channels = _shuffled(rng, POSITION_CHANNELS + ROTATION_CHANNELS)
        else:
            channels = _shuffled(rng, ROTATION_CHANNELS)
        joints.append(BvhJoint(f"J{index}", parent, rng.uniform(-0.5, 0.5, 3), channels))
        children = int(rng.integers(0, 3)) if depth < 4 and len(joints) < 12 else 0
        for _ in range(children):
            add(index, depth + 1)
        if not children:
            joints.append(BvhJoint(f"J{index}_end", index, rng.uniform(-0.5, 0.5, 3), (), True))

    add(None, 0)
    channels = [c for j in joints for c in j.channels]
    frames = rng.uniform(-180.0, 180.0, size=(int(rng.integers(1, 6)), len(channels)))
    for column, c in enumerate(channels):
        if c in POSITION_CHANNELS:
            frames[:, column] = rng.uniform(-2.0, 2.0, size=frames.shape[0])
    return BvhDocument(tuple(joints), float(rng.uniform(0.005, 0.05)), frames)


def test_random_documents_survive_write_then_parse(rng):
    for _ in range(200):
        doc = _random_document(rng)
        text = write_bvh(doc)
        back = parse_bvh(text)
        assert back.equals(doc, atol=1e-5)
        assert np.max(np.abs(back.frames - doc.frames)) <= 1e-5
        assert max(np.max(np.abs(a.offset - b.offset)) for a, b in zip(back.joints, doc.joints)) <= 1e-5
        assert write_bvh(back) == text
