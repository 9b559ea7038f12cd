"""Conditional generator network predicting clean motion from a noised input.

The motion channels are split into hand and torso regions; each region runs
its own stack of residual temporal-convolution blocks over the *full* noised
input concatenated with its region slice and the beat channel. Conditioning
enters two ways: FiLM scale/shift per block, driven by the style embedding
concatenated with a sinusoidal flow-time embedding, and additive features
computed from the 8-frame seed pose and the beat track. FiLM heads are
zero-initialized so conditioning is a no-op at initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import motion, tape
from .errors import BadConfig, PartitionMismatch, ShapeMismatch

SEED_FRAMES = 8
_TIME_FEATS = 32
REGIONS = ("hand", "torso")


@dataclass(frozen=True)
class RegionPartition:
    """Hand/torso joint split; root translation channels belong to the torso."""

    n_joints: int
    hand_joints: tuple

    def __post_init__(self):
        hands = tuple(sorted(int(j) for j in self.hand_joints))
        if len(set(hands)) != len(hands):
            raise PartitionMismatch("duplicate hand joints")
        if hands and (hands[0] < 0 or hands[-1] >= self.n_joints):
            raise PartitionMismatch(f"hand joints out of range for J={self.n_joints}")
        object.__setattr__(self, "hand_joints", hands)

    @property
    def torso_joints(self):
        return tuple(j for j in range(self.n_joints) if j not in self.hand_joints)

    def channels(self, region):
        """Channel indices of a region within the (J*6 + 3) layout."""
        if region == "hand":
            joints = self.hand_joints
            extra = []
        elif region == "torso":
            joints = self.torso_joints
            extra = list(range(self.n_joints * 6, self.n_joints * 6 + 3))
        else:
            raise PartitionMismatch(f"unknown region {region!r}")
        idx = [6 * j + k for j in joints for k in range(6)] + extra
        return np.array(idx, dtype=np.int64)


def split_regions(x, partition):
    """Split motion channels into (hands, torso) arrays."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != motion.n_channels(partition.n_joints):
        raise PartitionMismatch(
            f"{x.shape[-1]} channels, partition expects {motion.n_channels(partition.n_joints)}"
        )
    return x[..., partition.channels("hand")], x[..., partition.channels("torso")]


def merge_regions(hands, torso, partition):
    """Inverse of split_regions."""
    hands = np.asarray(hands, dtype=np.float64)
    torso = np.asarray(torso, dtype=np.float64)
    out = np.empty(hands.shape[:-1] + (motion.n_channels(partition.n_joints),))
    out[..., partition.channels("hand")] = hands
    out[..., partition.channels("torso")] = torso
    return out


@dataclass(frozen=True)
class Condition:
    """Per-clip conditioning: beat envelope, style id, seed pose, flow time."""

    beat: np.ndarray  # (T,) in [0, 1]
    style_id: int
    seed_pose: np.ndarray  # (SEED_FRAMES, channels)
    t: float | None = None

    def __post_init__(self):
        beat = np.asarray(self.beat, dtype=np.float64)
        seed = np.asarray(self.seed_pose, dtype=np.float64)
        if seed.ndim != 2 or seed.shape[0] != SEED_FRAMES:
            raise ShapeMismatch(f"seed pose must have exactly {SEED_FRAMES} frames, got {seed.shape}")
        object.__setattr__(self, "beat", beat)
        object.__setattr__(self, "seed_pose", seed)

    def with_time(self, t):
        return replace(self, t=float(t))


@dataclass(frozen=True)
class NetConfig:
    n_joints: int
    hand_joints: tuple
    hidden: int = 128
    blocks: int = 4
    style_vocab: int = 4
    style_dim: int = 16
    time_dim: int = 32
    kernel: int = 3

    def __post_init__(self):
        if self.hidden < 1 or self.blocks < 1 or self.style_vocab < 1:
            raise BadConfig("hidden, blocks and style_vocab must be positive")
        if self.kernel % 2 != 1:
            raise BadConfig("kernel must be odd")
        if self.style_dim < 1 or self.time_dim < 1:
            raise BadConfig("embedding dims must be positive")
        try:
            part = RegionPartition(self.n_joints, tuple(self.hand_joints))
        except PartitionMismatch as e:
            raise BadConfig(str(e)) from e
        object.__setattr__(self, "hand_joints", part.hand_joints)

    @property
    def partition(self):
        return RegionPartition(self.n_joints, self.hand_joints)

    @property
    def channels(self):
        return motion.n_channels(self.n_joints)

    def region_channels(self, region):
        return len(self.partition.channels(region))


@dataclass
class ModelParams:
    """Named float64 parameter arrays plus the config they were built for."""

    config: NetConfig
    values: dict

    def clone(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.values.items()})


def _shapes(config):
    c = config
    cond_dim = c.style_dim + c.time_dim
    shapes = {
        "style_emb": (c.style_vocab, c.style_dim),
        "time_w": (_TIME_FEATS, c.time_dim),
        "time_b": (c.time_dim,),
    }
    for r in REGIONS:
        cr = c.region_channels(r)
        shapes[f"{r}.in_w"] = (c.channels + cr + 1, c.hidden)
        shapes[f"{r}.in_b"] = (c.hidden,)
        shapes[f"{r}.seed_w"] = (SEED_FRAMES * c.channels, c.hidden)
        shapes[f"{r}.seed_b"] = (c.hidden,)
        shapes[f"{r}.beat_w"] = (1, c.hidden)
        for i in range(c.blocks):
            shapes[f"{r}.blk{i}.conv1_w"] = (c.kernel * c.hidden, c.hidden)
            shapes[f"{r}.blk{i}.conv1_b"] = (c.hidden,)
            shapes[f"{r}.blk{i}.conv2_w"] = (c.kernel * c.hidden, c.hidden)
            shapes[f"{r}.blk{i}.conv2_b"] = (c.hidden,)
            shapes[f"{r}.blk{i}.film_w"] = (cond_dim, 2 * c.hidden)
            shapes[f"{r}.blk{i}.film_b"] = (2 * c.hidden,)
        shapes[f"{r}.out_w"] = (c.hidden, cr)
        shapes[f"{r}.out_b"] = (cr,)
    return shapes


def param_count(config):
    """Closed-form parameter count for a config."""
    c = config
    cond_dim = c.style_dim + c.time_dim
    total = c.style_vocab * c.style_dim + _TIME_FEATS * c.time_dim + c.time_dim
    for r in REGIONS:
        cr = c.region_channels(r)
        total += (c.channels + cr + 1) * c.hidden + c.hidden  # input projection
        total += SEED_FRAMES * c.channels * c.hidden + c.hidden  # seed feature
        total += c.hidden  # beat feature
        total += c.blocks * (
            2 * (c.kernel * c.hidden * c.hidden + c.hidden)  # two convs
            + cond_dim * 2 * c.hidden + 2 * c.hidden  # FiLM head
        )
        total += c.hidden * cr + cr  # output projection
    return total


def init_params(seed, config):
    """Deterministic initialization; FiLM heads start at zero (no-op)."""
    rng = np.random.default_rng(seed)
    values = {}
    for name, shape in _shapes(config).items():
        if name.endswith("_b") or ".film_" in name:
            values[name] = np.zeros(shape)
        elif name == "style_emb":
            values[name] = 0.1 * rng.standard_normal(shape)
        elif name.endswith("out_w"):
            values[name] = rng.standard_normal(shape) * (0.1 / np.sqrt(shape[0]))
        else:
            values[name] = rng.standard_normal(shape) * np.sqrt(2.0 / shape[0])
    return ModelParams(config, values)


def time_features(t):
    """Sinusoidal features of the flow time, shape (..., _TIME_FEATS)."""
    t = np.asarray(t, dtype=np.float64)
    half = _TIME_FEATS // 2
    freqs = np.exp(np.linspace(0.0, np.log(1000.0), half))
    arg = t[..., None] * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1)


def param_tensors(tp, params):
    """Register every parameter as a gradient-tracked leaf on a tape."""
    return {name: tp.leaf(arr, requires_grad=True) for name, arr in params.values.items()}


def forward_tape(tp, ptens, config, x_t, beat, style_ids, seeds, ts):
    """
    Record the forward pass on a tape.

    x_t : Tensor (B, T, channels) — noised motion input.
    beat : (B, T) array; style_ids : (B,) ints; seeds : (B, SEED_FRAMES,
    channels); ts : (B,) flow times. Returns the (B, T, channels) prediction
    Tensor.
    """
    c = config
    B, T, _ = x_t.shape
    style_ids = np.asarray(style_ids, dtype=np.int64)
    if np.any(style_ids < 0) or np.any(style_ids >= c.style_vocab):
        raise BadConfig(f"style id outside vocabulary of {c.style_vocab}")

    beat_leaf = tp.leaf(np.asarray(beat, dtype=np.float64).reshape(B, T, 1))
    seed_leaf = tp.leaf(np.asarray(seeds, dtype=np.float64).reshape(B, SEED_FRAMES * c.channels))
    tfeat_leaf = tp.leaf(time_features(np.asarray(ts, dtype=np.float64)))

    style = tape.gather_rows(ptens["style_emb"], style_ids)
    temb = tfeat_leaf @ ptens["time_w"] + ptens["time_b"]
    cond_vec = tape.concat([style, temb], axis=-1)  # (B, style_dim + time_dim)

    part = c.partition
    region_out = {}
    for r in REGIONS:
        idx = part.channels(r)
        x_region = x_t[..., idx]
        h = tape.concat([x_t, x_region, beat_leaf], axis=-1) @ ptens[f"{r}.in_w"] + ptens[f"{r}.in_b"]
        h = h + (seed_leaf @ ptens[f"{r}.seed_w"] + ptens[f"{r}.seed_b"]).reshape(B, 1, c.hidden)
        h = h + beat_leaf @ ptens[f"{r}.beat_w"]
        for i in range(c.blocks):
            film = (cond_vec @ ptens[f"{r}.blk{i}.film_w"] + ptens[f"{r}.blk{i}.film_b"]).reshape(B, 1, 2 * c.hidden)
            gamma = 1.0 + film[:, :, : c.hidden]
            beta = film[:, :, c.hidden :]
            y = tape.conv1d(h, ptens[f"{r}.blk{i}.conv1_w"], ptens[f"{r}.blk{i}.conv1_b"],
                            stride=1, pad=c.kernel // 2)
            y = (y * gamma + beta).relu()
            y = tape.conv1d(y, ptens[f"{r}.blk{i}.conv2_w"], ptens[f"{r}.blk{i}.conv2_b"],
                            stride=1, pad=c.kernel // 2)
            h = h + y
        out_r = h @ ptens[f"{r}.out_w"] + ptens[f"{r}.out_b"]
        region_out[r] = tape.expand_at(out_r, (Ellipsis, idx), (B, T, c.channels))
    return region_out["hand"] + region_out["torso"]


def forward(params, x_t, cond):
    """
    Plain-array forward for a single clip.

    x_t : (T, channels); cond : Condition with flow time set. Returns the
    predicted clean motion, same shape as x_t.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim != 2 or x_t.shape[-1] != params.config.channels:
        raise ShapeMismatch(f"expected (T, {params.config.channels}), got {x_t.shape}")
    if cond.beat.shape[0] != x_t.shape[0]:
        raise ShapeMismatch("beat track length differs from motion length")
    if cond.t is None:
        raise ShapeMismatch("condition is missing the flow time")
    tp = tape.Tape()
    ptens = {name: tp.leaf(arr) for name, arr in params.values.items()}
    out = forward_tape(
        tp, ptens, params.config,
        tp.leaf(x_t[None]), cond.beat[None], [cond.style_id],
        cond.seed_pose[None], [cond.t],
    )
    return out.data[0]


def backward(tp, loss, ptens, extra_grads=None):
    """
    Run the tape backward from ``loss`` and collect named parameter grads.

    ``extra_grads`` (Tensor -> array) lets analytically computed loss
    gradients join the sweep at intermediate nodes.
    """
    tp.backward(loss, extra_grads=extra_grads)
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in ptens.items()
    }


@dataclass
class AdamState:
    step: int
    m: dict
    v: dict

    @classmethod
    def fresh(cls, params):
        return cls(0,
                   {k: np.zeros_like(v) for k, v in params.values.items()},
                   {k: np.zeros_like(v) for k, v in params.values.items()})


def adam_step(params, grads, lr, state, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update over every named parameter (in place)."""
    state.step += 1
    t = state.step
    for name, g in grads.items():
        if g.shape != params.values[name].shape:
            raise ShapeMismatch(f"grad for {name} has shape {g.shape}")
        m = state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        params.values[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params
