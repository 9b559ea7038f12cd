"""Procedural beat-conditioned motion data.

Clips are built so that kinematic beats land exactly on the condition beats:
every joint holds a target angle at each beat frame and moves between
consecutive targets along a quintic smoothstep, whose angular velocity is
zero at the endpoints and bell-shaped in between. Velocity minima therefore
coincide with the beat impulses, mimicking speech-gesture synchrony. Styles
differ in per-joint amplitudes, phase steps and axis mixes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import motion, net, rotation, skeleton as sk, utils
from .errors import UnknownTemplate

BEAT_HALF_WIDTH = 1  # raised-cosine bump spans 3 frames
EULER_ORDER = "ZXY"

# 13-joint rig: 7 torso joints plus two 3-joint chains flagged as hands.
_HUMANOID13 = [
    # name, parent, offset
    ("root", -1, (0.0, 0.0, 0.0)),
    ("spine", 0, (0.0, 0.15, 0.0)),
    ("chest", 1, (0.0, 0.15, 0.0)),
    ("neck", 2, (0.0, 0.10, 0.0)),
    ("head", 3, (0.0, 0.10, 0.0)),
    ("l_shoulder", 2, (0.18, 0.05, 0.0)),
    ("r_shoulder", 2, (-0.18, 0.05, 0.0)),
    ("l_elbow", 5, (0.25, 0.0, 0.0)),
    ("l_wrist", 7, (0.22, 0.0, 0.0)),
    ("l_hand", 8, (0.08, 0.0, 0.0)),
    ("r_elbow", 6, (-0.25, 0.0, 0.0)),
    ("r_wrist", 10, (-0.22, 0.0, 0.0)),
    ("r_hand", 11, (-0.08, 0.0, 0.0)),
]
HUMANOID13_HAND_JOINTS = (7, 8, 9, 10, 11, 12)


@dataclass(frozen=True)
class SynthConfig:
    template: str = "HUMANOID13"
    frames: int = 64
    fps: float = 15.0
    n_clips: int = 256
    n_styles: int = 4
    beat_period: tuple = (10.0, 16.0)
    seed: int = 0

    def __post_init__(self):
        if self.frames < 16:
            raise ValueError("clip length must be >= 16 frames")
        if self.n_styles < 1:
            raise ValueError("need at least one style")
        if min(self.beat_period) <= 0:
            raise ValueError("beat periods must be positive")


def gen_skeleton(template):
    """Build a skeleton from a template name: CHAIN(n) or HUMANOID13."""
    m = re.fullmatch(r"CHAIN\((\d+)\)", template.strip(), flags=re.IGNORECASE)
    if m:
        n_joints = int(m.group(1))
        if n_joints < 1:
            raise UnknownTemplate(f"CHAIN needs at least 1 joint: {template}")
        return sk.chain_skeleton(n_joints - 1)
    if template.strip().upper() == "HUMANOID13":
        names, parents, offsets = zip(*_HUMANOID13)
        return sk.Skeleton(names, np.array(parents), np.array(offsets))
    raise UnknownTemplate(f"unknown skeleton template {template!r}")


def hand_joints_for(template):
    """Joint indices of the hand region for a template."""
    if template.strip().upper() == "HUMANOID13":
        return HUMANOID13_HAND_JOINTS
    return ()


def template_partition(template):
    skel = gen_skeleton(template)
    return net.RegionPartition(skel.n_joints, hand_joints_for(template))


def beat_frames(period, frames):
    """Beat positions round(k * period) within [0, frames)."""
    out = []
    k = 0
    while True:
        b = int(round(k * period))
        if b >= frames:
            break
        if not out or b > out[-1]:
            out.append(b)
        k += 1
    return np.array(out, dtype=np.int64)


def beat_track(beats, frames):
    """Raised-cosine impulse envelope (3-frame bumps, unit peaks)."""
    track = np.zeros(frames)
    for b in beats:
        for d in range(-BEAT_HALF_WIDTH, BEAT_HALF_WIDTH + 1):
            f = b + d
            if 0 <= f < frames:
                bump = 0.5 * (1.0 + np.cos(np.pi * d / (BEAT_HALF_WIDTH + 0.5)))
                track[f] = max(track[f], bump)
    return track


def _smoothstep(u):
    # quintic: zero velocity and acceleration at both ends
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


def _style_params(cfg, style, n_joints):
    rng = np.random.default_rng([cfg.seed, 0x57E, style])
    scale = 0.35 + 0.5 * rng.random()
    amp = scale * (0.15 + 0.65 * rng.random((n_joints, 3)))
    amp[0] *= 0.3  # keep the root orientation tame
    step = 0.4 + 1.4 * rng.random((n_joints, 3))
    phase = 2 * np.pi * rng.random((n_joints, 3))
    sway = 0.02 + 0.04 * rng.random(3)
    return amp, step, phase, sway


def _segments(beats, frames, period):
    """Beat-anchored segment boundaries covering [0, frames)."""
    bounds = list(beats)
    if not bounds or bounds[0] != 0:
        bounds = [0] + bounds
    while bounds[-1] < frames:
        bounds.append(bounds[-1] + max(2, int(round(period))))
    return np.array(bounds, dtype=np.int64)


def gen_clip(cfg, style, seed):
    """
    One deterministic clip: (motion (T, J*6+3) in global 6D, Condition).

    Per-joint local Euler angles follow style-dependent target sequences
    anchored at the beat frames, converted through local->global FK to
    global 6D channels.
    """
    m, cond, _ = _gen_clip_meta(cfg, style, seed)
    return m, cond


def _gen_clip_meta(cfg, style, seed):
    if not 0 <= style < cfg.n_styles:
        raise ValueError(f"style {style} outside [0, {cfg.n_styles})")
    skel = gen_skeleton(cfg.template)
    J = skel.n_joints
    T = cfg.frames
    rng = np.random.default_rng([cfg.seed, 0xC11F, style, seed])
    period = float(cfg.beat_period[0] + (cfg.beat_period[1] - cfg.beat_period[0]) * rng.random())
    beats = beat_frames(period, T)
    track = beat_track(beats, T)

    amp, step, phase, sway = _style_params(cfg, style, J)
    chi = 2 * np.pi * rng.random()
    jitter = 0.9 + 0.2 * rng.random((J, 3))

    bounds = _segments(beats, T, period)
    n_targets = len(bounds)
    idx = np.arange(n_targets)[:, None, None]
    targets = jitter * amp * np.sin(idx * step + phase + chi)  # (n_targets, J, 3)

    angles = np.empty((T, J, 3))
    for m_i in range(n_targets - 1):
        lo, hi = bounds[m_i], bounds[m_i + 1]
        lo_c, hi_c = max(0, lo), min(T, hi)
        if hi_c <= lo_c:
            continue
        u = (np.arange(lo_c, hi_c) - lo) / (hi - lo)
        s = _smoothstep(u)[:, None, None]
        angles[lo_c:hi_c] = targets[m_i] + (targets[m_i + 1] - targets[m_i]) * s

    local_rots = rotation.euler_to_matrix(angles, EULER_ORDER)  # (T, J, 3, 3)
    global_rots = sk.chain_globals(skel, local_rots)
    sixd = np.concatenate([global_rots[..., :, 0], global_rots[..., :, 1]], axis=-1)

    tt = np.arange(T) / max(period * 4.0, 1.0)
    root = np.stack([
        sway[0] * np.sin(2 * np.pi * tt + chi),
        sway[1] * np.sin(4 * np.pi * tt + chi) * 0.25,
        sway[2] * np.cos(2 * np.pi * tt + chi),
    ], axis=-1)

    motion_seq = motion.merge_channels(sixd, root)
    cond = net.Condition(track, style, motion_seq[: net.SEED_FRAMES].copy())
    return motion_seq, cond, period


@dataclass(frozen=True)
class Clip:
    motion: np.ndarray
    cond: net.Condition
    style: int
    seed: int
    period: float


@dataclass(frozen=True)
class Dataset:
    train: tuple
    val: tuple
    config: SynthConfig

    @property
    def clips(self):
        return self.train + self.val


def gen_dataset(cfg):
    """Full dataset with a deterministic 90/10 train/val split, disjoint seeds."""
    def build(i):
        style = i % cfg.n_styles
        m, cond, period = _gen_clip_meta(cfg, style, i)
        return Clip(m, cond, style, i, period)

    clips = utils.parallel_map(build, range(cfg.n_clips))
    n_val = max(1, cfg.n_clips // 10)
    return Dataset(tuple(clips[: cfg.n_clips - n_val]), tuple(clips[cfg.n_clips - n_val :]), cfg)


def training_pairs(clips):
    """(motion, Condition) pairs as consumed by the flow trainer."""
    return [(c.motion, c.cond) for c in clips]
