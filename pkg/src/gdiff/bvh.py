"""BVH subset reader: HIERARCHY + MOTION, rotation channels in any of the
six axis orders, optional position channels on any joint (used for the root
translation). End Sites are consumed but not imported; frames convert from
per-joint local Euler angles (degrees) to global 6D motion channels."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import motion, rotation, skeleton as sk
from .errors import ParseError, UnsupportedChannel

_ROTATION_CHANNELS = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}
_POSITION_CHANNELS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}


class _Cursor:
    def __init__(self, text):
        self.lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
        self.lines = [(n, ln) for n, ln in self.lines if ln]
        self.pos = 0

    @property
    def lineno(self):
        if self.pos < len(self.lines):
            return self.lines[self.pos][0]
        return self.lines[-1][0] + 1 if self.lines else 1

    def peek(self):
        if self.pos >= len(self.lines):
            raise ParseError("unexpected end of file", line=self.lineno)
        return self.lines[self.pos][1]

    def take(self):
        line = self.peek()
        self.pos += 1
        return line

    def expect(self, token):
        line = self.take()
        if not line.startswith(token):
            raise ParseError(f"expected {token!r}, got {line!r}", line=self.lines[self.pos - 1][0])
        return line


def _parse_offset(cur):
    lineno = cur.lineno
    parts = cur.expect("OFFSET").split()
    if len(parts) != 4:
        raise ParseError("OFFSET needs 3 values", line=lineno)
    try:
        return np.array([float(p) for p in parts[1:]])
    except ValueError as e:
        raise ParseError(f"bad OFFSET value: {e}", line=lineno) from e


def _parse_channels(cur):
    lineno = cur.lineno
    parts = cur.expect("CHANNELS").split()
    try:
        n = int(parts[1])
    except (IndexError, ValueError) as e:
        raise ParseError("CHANNELS needs a count", line=lineno) from e
    names = parts[2:]
    if len(names) != n:
        raise ParseError(f"CHANNELS lists {len(names)} names for count {n}", line=lineno)
    order = ""
    for name in names:
        if name in _ROTATION_CHANNELS:
            order += _ROTATION_CHANNELS[name]
        elif name in _POSITION_CHANNELS:
            continue
        else:
            raise UnsupportedChannel(f"line {lineno}: unsupported channel {name!r}")
    if order and order not in rotation.BVH_ORDERS:
        raise ParseError(f"rotation channels form unsupported order {order!r}", line=lineno)
    return names, order


def _skip_end_site(cur):
    cur.expect("{")
    _parse_offset(cur)
    cur.expect("}")


def _parse_joint(cur, parent, joints):
    header = cur.take()
    kind, _, name = header.partition(" ")
    index = len(joints)
    joints.append({"name": name.strip() or f"joint{index}", "parent": parent,
                   "offset": None, "channels": [], "order": ""})
    cur.expect("{")
    joints[index]["offset"] = _parse_offset(cur)
    if cur.peek().startswith("CHANNELS"):
        names, order = _parse_channels(cur)
        joints[index]["channels"] = names
        joints[index]["order"] = order
    while True:
        line = cur.peek()
        if line.startswith("JOINT"):
            _parse_joint(cur, index, joints)
        elif line.startswith("End Site"):
            cur.take()
            _skip_end_site(cur)
        elif line.startswith("}"):
            cur.take()
            return
        else:
            raise ParseError(f"unexpected {line!r} in joint block", line=cur.lineno)


def bvh_import(path):
    """
    Read a BVH file -> (Skeleton, motion (T, J*6+3) in global 6D, fps).

    Raises ParseError with the offending line number on malformed input and
    UnsupportedChannel for channels that are neither rotations nor positions.
    """
    cur = _Cursor(Path(path).read_text(encoding="utf-8"))
    cur.expect("HIERARCHY")
    if not cur.peek().startswith("ROOT"):
        raise ParseError("expected ROOT after HIERARCHY", line=cur.lineno)
    joints = []
    _parse_joint(cur, -1, joints)

    cur.expect("MOTION")
    lineno = cur.lineno
    parts = cur.expect("Frames:").split()
    try:
        n_frames = int(parts[1])
    except (IndexError, ValueError) as e:
        raise ParseError("bad Frames count", line=lineno) from e
    lineno = cur.lineno
    parts = cur.expect("Frame Time:").split()
    try:
        frame_time = float(parts[2])
    except (IndexError, ValueError) as e:
        raise ParseError("bad Frame Time", line=lineno) from e
    if frame_time <= 0:
        raise ParseError("Frame Time must be positive", line=lineno)

    J = len(joints)
    total_channels = sum(len(j["channels"]) for j in joints)
    angles = np.zeros((n_frames, J, 3))
    root_pos = np.tile(joints[0]["offset"], (n_frames, 1))
    has_root_position = any(c in _POSITION_CHANNELS for c in joints[0]["channels"])

    for f in range(n_frames):
        lineno = cur.lineno
        try:
            values = [float(v) for v in cur.take().split()]
        except ParseError:
            raise ParseError(f"missing frame {f + 1} of {n_frames}", line=cur.lineno) from None
        except ValueError as e:
            raise ParseError(f"bad frame value: {e}", line=lineno) from e
        if len(values) != total_channels:
            raise ParseError(
                f"frame has {len(values)} values, expected {total_channels}", line=lineno)
        pos = 0
        for j, joint in enumerate(joints):
            rot_axis = 0
            for name in joint["channels"]:
                value = values[pos]
                pos += 1
                if name in _ROTATION_CHANNELS:
                    angles[f, j, rot_axis] = np.radians(value)
                    rot_axis += 1
                elif j == 0 and has_root_position:
                    root_pos[f, _POSITION_CHANNELS[name]] = value

    skel = sk.Skeleton(
        tuple(j["name"] for j in joints),
        np.array([j["parent"] for j in joints]),
        np.stack([j["offset"] for j in joints]),
    )
    local_rots = np.tile(np.eye(3), (n_frames, J, 1, 1))
    for j, joint in enumerate(joints):
        if joint["order"]:
            local_rots[:, j] = rotation.euler_to_matrix(angles[:, j], joint["order"])
    global_rots = sk.chain_globals(skel, local_rots)
    sixd = np.concatenate([global_rots[..., :, 0], global_rots[..., :, 1]], axis=-1)
    seq = motion.merge_channels(sixd, root_pos)
    return skel, seq, 1.0 / frame_time
