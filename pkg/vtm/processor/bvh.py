"""BVH motion-capture reader and writer.

Offsets and position channels are converted to meters on read by multiplying
with ``scale`` (default 0.01, i.e. files in centimeters) and converted back on
write. Rotation channels are kept in degrees. Joints are stored in file order,
which is the depth-first preorder of the hierarchy; end sites are kept as
channel-less joints named ``<parent>_end``.
"""

import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from transformers.utils import logging

from ..errors import BvhFileTooLarge, BvhMismatchError, BvhSyntaxError, TopologyMismatchError
from .kinematics import euler_to_quat, quat_to_euler
from .skeleton import JOINT_INDEX, NUM_JOINTS, PARENTS, Skeleton, canonical_joint_name, canonical_skeleton

logger = logging.get_logger(__name__)

DEFAULT_SCALE = 0.01
MAX_FILE_BYTES = 512 * 1024 * 1024
POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
CANONICAL_ROTATION_ORDER = ("Zrotation", "Xrotation", "Yrotation")
ROOT_CHANNELS = POSITION_CHANNELS + CANONICAL_ROTATION_ORDER


@dataclass(frozen=True, eq=False)
class BvhJoint:
    name: str
    parent: Optional[int]
    offset: np.ndarray
    channels: Tuple[str, ...] = ()
    is_end_site: bool = False

    def __post_init__(self):
        offset = np.array(self.offset, dtype=np.float64).reshape(3)
        offset.setflags(write=False)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def rotation_order(self) -> str:
        """Axis letters of the rotation channels in declared order, e.g. ``"ZXY"``."""
        return "".join(c[0] for c in self.channels if c in ROTATION_CHANNELS)


@dataclass(frozen=True, eq=False)
class BvhDocument:
    joints: Tuple[BvhJoint, ...]
    frame_time: float
    frames: np.ndarray

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim == 1:
            frames = frames.reshape(1, -1)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "joints", tuple(self.joints))

    @property
    def num_channels(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def channel_slices(self) -> List[slice]:
        slices, start = [], 0
        for joint in self.joints:
            slices.append(slice(start, start + len(joint.channels)))
            start += len(joint.channels)
        return slices

    def validate(self):
        """Raise ``BvhSyntaxError``/``BvhMismatchError`` if an invariant does not hold."""
        if not self.joints:
            raise BvhSyntaxError("document has no joints")
        for i, joint in enumerate(self.joints):
            _check_joint(joint, i)
        if self.frame_time <= 0:
            raise BvhSyntaxError(f"frame time must be positive, got {self.frame_time}")
        if self.num_frames < 1:
            raise BvhMismatchError("document has no frames")
        if self.frames.shape[1] != self.num_channels:
            raise BvhMismatchError(f"frame rows have {self.frames.shape[1]} values, hierarchy declares {self.num_channels}")
        if [i for i, _ in _preorder(self.joints)] != list(range(len(self.joints))):
            raise BvhSyntaxError("joints are not in depth-first order")

    def equals(self, other: "BvhDocument", atol: float = 1e-5) -> bool:
        if len(self.joints) != len(other.joints) or self.frames.shape != other.frames.shape:
            return False
        for a, b in zip(self.joints, other.joints):
            if (a.name, a.parent, a.channels, a.is_end_site) != (b.name, b.parent, b.channels, b.is_end_site):
                return False
            if not np.allclose(a.offset, b.offset, rtol=0.0, atol=atol):
                return False
        return abs(self.frame_time - other.frame_time) <= atol and \
            np.allclose(self.frames, other.frames, rtol=0.0, atol=atol)


def _check_joint(joint: BvhJoint, index: int, line: Optional[int] = None):
    channels = joint.channels
    if any(c not in POSITION_CHANNELS + ROTATION_CHANNELS for c in channels):
        raise BvhSyntaxError(f"joint {joint.name}: unknown channel in {channels}", line)
    if joint.parent is None:
        if index != 0:
            raise BvhSyntaxError(f"joint {joint.name} has no parent but is not the root", line)
        if joint.is_end_site or sorted(channels) != sorted(POSITION_CHANNELS + ROTATION_CHANNELS):
            raise BvhSyntaxError(f"root {joint.name} needs 3 position and 3 rotation channels", line)
        return
    if not 0 <= joint.parent < index:
        raise BvhSyntaxError(f"joint {joint.name} has parent {joint.parent}, parents must precede children", line)
    if joint.is_end_site:
        if channels:
            raise BvhSyntaxError(f"end site {joint.name} cannot carry channels", line)
    elif sorted(channels) != sorted(ROTATION_CHANNELS):
        raise BvhSyntaxError(f"joint {joint.name} needs exactly 3 rotation channels, got {channels}", line)


def _preorder(joints: Sequence[BvhJoint]) -> List[Tuple[int, int]]:
    """(index, depth) pairs in depth-first preorder, children visited by index."""
    children: Dict[int, List[int]] = {i: [] for i in range(len(joints))}
    roots = []
    for i, joint in enumerate(joints):
        (roots if joint.parent is None else children[joint.parent]).append(i)
    order = []
    stack = [(r, 0) for r in reversed(roots)]
    while stack:
        i, depth = stack.pop()
        order.append((i, depth))
        stack.extend((c, depth + 1) for c in reversed(children[i]))
    return order


# reading -------------------------------------------------------------------

class _Tokens:
    def __init__(self, lines: Sequence[Tuple[int, str]]):
        self.items: List[Tuple[str, int]] = []
        for lineno, line in lines:
            for token in line.replace("{", " { ").replace("}", " } ").split():
                self.items.append((token, lineno))
        self.pos = 0

    def next(self, what: str) -> Tuple[str, int]:
        if self.pos >= len(self.items):
            last = self.items[-1][1] if self.items else 1
            raise BvhSyntaxError(f"unexpected end of hierarchy, expected {what}", last)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def expect(self, literal: str):
        token, line = self.next(repr(literal))
        if token != literal:
            raise BvhSyntaxError(f"expected {literal!r}, got {token!r}", line)

    def number(self, cast=float):
        token, line = self.next("a number")
        try:
            return cast(token)
        except ValueError:
            raise BvhSyntaxError(f"expected a number, got {token!r}", line) from None


def parse_bvh(text: str, scale: float = DEFAULT_SCALE) -> BvhDocument:
    """Parse BVH text (LF or CRLF line endings) into a document in meters."""
    if len(text) > MAX_FILE_BYTES:
        raise BvhFileTooLarge(f"BVH text exceeds {MAX_FILE_BYTES} bytes")
    lines = list(enumerate(text.splitlines(), start=1))
    motion_at = next((i for i, (_, line) in enumerate(lines) if line.strip().upper() == "MOTION"), None)
    if motion_at is None:
        raise BvhSyntaxError("missing MOTION section", len(lines) or 1)

    tokens = _Tokens(lines[:motion_at])
    tokens.expect("HIERARCHY")
    pending: List[dict] = []
    stack: List[int] = []
    root_closed = False
    while tokens.pos < len(tokens.items):
        token, line = tokens.next("a hierarchy keyword")
        if root_closed:
            raise BvhSyntaxError(f"unexpected {token!r} after the root joint closed", line)
        if token in ("ROOT", "JOINT"):
            if (token == "ROOT") != (not stack):
                raise BvhSyntaxError(f"{token} is not allowed here", line)
            name, _ = tokens.next("a joint name")
            pending.append(dict(name=name, parent=stack[-1] if stack else None, offset=None,
                                channels=(), is_end_site=False, line=line))
            tokens.expect("{")
            stack.append(len(pending) - 1)
        elif token == "End":
            tokens.expect("Site")
            if not stack:
                raise BvhSyntaxError("End Site outside a joint", line)
            pending.append(dict(name=pending[stack[-1]]["name"] + "_end", parent=stack[-1], offset=None,
                                channels=(), is_end_site=True, line=line))
            tokens.expect("{")
            stack.append(len(pending) - 1)
        elif token == "OFFSET":
            if not stack:
                raise BvhSyntaxError("OFFSET outside a joint", line)
            pending[stack[-1]]["offset"] = [tokens.number() * scale for _ in range(3)]
        elif token == "CHANNELS":
            if not stack:
                raise BvhSyntaxError("CHANNELS outside a joint", line)
            count = tokens.number(int)
            pending[stack[-1]]["channels"] = tuple(tokens.next("a channel name")[0] for _ in range(count))
        elif token == "}":
            if not stack:
                raise BvhSyntaxError("unbalanced '}'", line)
            stack.pop()
            root_closed = not stack
        else:
            raise BvhSyntaxError(f"unexpected token {token!r}", line)
    if stack or not pending:
        raise BvhSyntaxError("hierarchy is not closed", lines[motion_at][0])

    joints = []
    for i, spec in enumerate(pending):
        if spec["offset"] is None:
            raise BvhSyntaxError(f"joint {spec['name']} has no OFFSET", spec["line"])
        joint = BvhJoint(spec["name"], spec["parent"], spec["offset"], spec["channels"], spec["is_end_site"])
        _check_joint(joint, i, spec["line"])
        joints.append(joint)

    n_frames, frame_time, rows = _parse_motion(lines[motion_at + 1:], sum(len(j.channels) for j in joints))
    frames = np.array(rows, dtype=np.float64).reshape(n_frames, -1)
    column = 0
    for joint in joints:
        for c in joint.channels:
            if c in POSITION_CHANNELS:
                frames[:, column] *= scale
            column += 1
    return BvhDocument(tuple(joints), frame_time, frames)


def _parse_motion(lines: Sequence[Tuple[int, str]], n_channels: int):
    header: Dict[str, Tuple[str, int]] = {}
    rows: List[List[float]] = []
    for lineno, raw in lines:
        line = raw.strip()
        if not line:
            continue
        if len(header) < 2:
            key, sep, value = line.partition(":")
            key = " ".join(key.split()).lower()
            if not sep or key not in ("frames", "frame time"):
                raise BvhSyntaxError(f"expected 'Frames:' and 'Frame Time:', got {line!r}", lineno)
            header[key] = (value.strip(), lineno)
            continue
        try:
            row = [float(v) for v in line.split()]
        except ValueError:
            raise BvhSyntaxError("non-numeric value in frame data", lineno) from None
        if len(row) != n_channels:
            raise BvhMismatchError(f"line {lineno}: frame has {len(row)} values, hierarchy declares {n_channels}")
        rows.append(row)
    if len(header) < 2:
        raise BvhSyntaxError("MOTION section lacks 'Frames:' or 'Frame Time:'", lines[-1][0] if lines else None)
    try:
        n_frames = int(header["frames"][0])
    except ValueError:
        raise BvhSyntaxError("invalid frame count", header["frames"][1]) from None
    try:
        frame_time = float(header["frame time"][0])
    except ValueError:
        raise BvhSyntaxError("invalid frame time", header["frame time"][1]) from None
    if n_frames < 1:
        raise BvhMismatchError("BVH declares no frames")
    if frame_time <= 0:
        raise BvhSyntaxError("frame time must be positive", header["frame time"][1])
    if len(rows) != n_frames:
        raise BvhMismatchError(f"BVH declares {n_frames} frames but contains {len(rows)} rows")
    return n_frames, frame_time, rows


def load_bvh(path: str, scale: float = DEFAULT_SCALE) -> BvhDocument:
    size = os.path.getsize(path)
    if size > MAX_FILE_BYTES:
        raise BvhFileTooLarge(f"{path} is {size} bytes, limit is {MAX_FILE_BYTES}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        return parse_bvh(f.read(), scale=scale)


# writing -------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_bvh(doc: BvhDocument, scale: float = DEFAULT_SCALE) -> str:
    """Serialize with 2-space indentation and 6 decimals; output is deterministic."""
    doc.validate()
    out = ["HIERARCHY"]
    order = _preorder(doc.joints)
    closing: List[int] = []
    for i, depth in order:
        while closing and closing[-1] >= depth:
            out.append("  " * closing.pop() + "}")
        joint = doc.joints[i]
        pad = "  " * depth
        if joint.is_end_site:
            out.append(f"{pad}End Site")
        else:
            out.append(f"{pad}{'ROOT' if joint.parent is None else 'JOINT'} {joint.name}")
        out.append(pad + "{")
        offset = joint.offset / scale
        out.append(f"{pad}  OFFSET {_fmt(offset[0])} {_fmt(offset[1])} {_fmt(offset[2])}")
        if not joint.is_end_site:
            out.append(f"{pad}  CHANNELS {len(joint.channels)} {' '.join(joint.channels)}")
        closing.append(depth)
    while closing:
        out.append("  " * closing.pop() + "}")

    frames = np.array(doc.frames)
    column = 0
    for joint in doc.joints:
        for c in joint.channels:
            if c in POSITION_CHANNELS:
                frames[:, column] /= scale
            column += 1
    out.append("MOTION")
    out.append(f"Frames: {doc.num_frames}")
    out.append(f"Frame Time: {_fmt(doc.frame_time)}")
    out.extend(" ".join(_fmt(v) for v in row) for row in frames)
    return "\n".join(out) + "\n"


def save_bvh(path: str, doc: BvhDocument, scale: float = DEFAULT_SCALE):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(write_bvh(doc, scale=scale))


# conversion to and from the canonical skeleton -----------------------------

def _canonical_mapping(doc: BvhDocument) -> List[int]:
    """Document joint index for each canonical joint."""
    mapping: Dict[str, int] = {}
    for i, joint in enumerate(doc.joints):
        if joint.is_end_site:
            continue
        name = canonical_joint_name(joint.name)
        if name is None or name in mapping:
            raise TopologyMismatchError(f"joint {joint.name!r} does not map onto the {NUM_JOINTS}-joint layout")
        mapping[name] = i
    if len(mapping) != NUM_JOINTS:
        missing = sorted(set(JOINT_INDEX) - set(mapping))
        raise TopologyMismatchError(f"BVH hierarchy lacks joints {missing}")
    order = [mapping[name] for name in sorted(mapping, key=JOINT_INDEX.get)]
    for j, parent in enumerate(PARENTS):
        doc_parent = doc.joints[order[j]].parent
        expected = None if parent < 0 else order[parent]
        if doc_parent != expected:
            raise TopologyMismatchError(f"joint {doc.joints[order[j]].name!r} has an unexpected parent")
    return order


def skeleton_from_bvh(doc: BvhDocument) -> Skeleton:
    order = _canonical_mapping(doc)
    offsets = np.stack([doc.joints[i].offset for i in order])
    return canonical_skeleton(offsets)


def motion_from_bvh(doc: BvhDocument) -> Tuple[np.ndarray, np.ndarray, Skeleton]:
    """Local quaternions [F, 24, 4], root positions [F, 3] (root OFFSET folded in) and the skeleton."""
    order = _canonical_mapping(doc)
    slices = doc.channel_slices()
    rotations = np.zeros((doc.num_frames, NUM_JOINTS, 4))
    for j, i in enumerate(order):
        joint = doc.joints[i]
        values = doc.frames[:, slices[i]]
        rot_cols = [k for k, c in enumerate(joint.channels) if c in ROTATION_CHANNELS]
        rotations[:, j] = euler_to_quat(values[:, rot_cols], joint.rotation_order)
    root = doc.joints[order[0]]
    root_values = doc.frames[:, slices[order[0]]]
    root_positions = np.stack(
        [root_values[:, root.channels.index(c)] for c in POSITION_CHANNELS], axis=1
    ) + root.offset
    return rotations, root_positions, skeleton_from_bvh(doc)


def motion_to_bvh(skeleton: Skeleton, rotations: np.ndarray, root_positions: np.ndarray,
                  frame_time: float, end_sites: bool = True) -> BvhDocument:
    """Build a document in canonical channel order (positions, then Z/X/Y rotations)."""
    rotations = np.asarray(rotations, dtype=np.float64)
    root_positions = np.asarray(root_positions, dtype=np.float64)
    n_frames = rotations.shape[0]
    children: Dict[int, List[int]] = {j: [] for j in range(NUM_JOINTS)}
    for j, p in enumerate(skeleton.parents):
        if p >= 0:
            children[p].append(j)

    joints: List[BvhJoint] = []
    columns: List[np.ndarray] = []
    new_index: Dict[int, int] = {}
    order = "".join(c[0] for c in CANONICAL_ROTATION_ORDER)
    stack = [0]
    while stack:
        j = stack.pop()
        parent = skeleton.parents[j]
        new_index[j] = len(joints)
        euler = quat_to_euler(rotations[:, j], order)
        if parent < 0:
            joints.append(BvhJoint(skeleton.joint_names[j], None, np.zeros(3), ROOT_CHANNELS))
            columns.append(np.concatenate([root_positions, euler], axis=1))
        else:
            joints.append(BvhJoint(skeleton.joint_names[j], new_index[parent], skeleton.offsets[j],
                                   CANONICAL_ROTATION_ORDER))
            columns.append(euler)
        if not children[j] and end_sites:
            joints.append(BvhJoint(skeleton.joint_names[j] + "_end", new_index[j],
                                   0.5 * skeleton.offsets[j], (), True))
        stack.extend(reversed(children[j]))
    frames = np.concatenate(columns, axis=1).reshape(n_frames, -1)
    return BvhDocument(tuple(joints), float(frame_time), frames)


__all__ = [
    "BvhJoint", "BvhDocument", "parse_bvh", "write_bvh", "load_bvh", "save_bvh",
    "skeleton_from_bvh", "motion_from_bvh", "motion_to_bvh", "DEFAULT_SCALE", "MAX_FILE_BYTES",
]
