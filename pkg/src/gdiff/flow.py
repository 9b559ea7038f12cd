"""Flow-matching objective, Euler sampler, and seed-pose streaming.

Training regresses the clean motion x1 from a linear interpolation
x_t = (1-t) x0 + t x1 between Gaussian noise and data (both in per-channel
standardized space). The structural losses are evaluated on the
de-standardized prediction against GT and their analytic gradients join the
network's backward sweep at the prediction node. Sampling integrates the
induced velocity (x1_hat - x_t) / (1 - t) with a fixed-step Euler loop and
returns the final x1 prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constraints, motion, net, rotation, skeleton as sk, tape, temporal
from .errors import NonFiniteLoss, ShapeMismatch

LOSS_COLUMNS = ("step", "simple", "pos", "j", "s", "m", "total")


@dataclass(frozen=True)
class FlowConfig:
    sample_steps: int = 20
    lambda_pos: float = 1.0
    lambda_j: float = 1.0
    lambda_s: float = 1.0
    lambda_m: float = 0.1
    noise_seed: int = 0
    lr: float = 1e-4
    batch_size: int = 16

    def __post_init__(self):
        if self.sample_steps < 1:
            raise ValueError("sample_steps must be >= 1")
        if min(self.lambda_pos, self.lambda_j, self.lambda_s, self.lambda_m) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class Normalizer:
    """Per-channel standardization fitted on training motion."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, clips):
        data = np.asarray(clips, dtype=np.float64).reshape(-1, np.shape(clips)[-1])
        std = data.std(axis=0)
        return cls(data.mean(axis=0), np.where(std < 1e-8, 1.0, std))

    @classmethod
    def identity(cls, channels):
        return cls(np.zeros(channels), np.ones(channels))

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


@dataclass
class TrainContext:
    """Geometric and perceptual context for the constraint losses."""

    skel: object
    anchors: constraints.AnchorSet
    normalizer: Normalizer
    encoder: temporal.TemporalEncoder | None = None


@dataclass
class TrainState:
    params: net.ModelParams
    adam: net.AdamState
    step: int = 0

    @classmethod
    def fresh(cls, params):
        return cls(params, net.AdamState.fresh(params))


def interpolate(x0, x1, t):
    """Linear interpolation (1-t) x0 + t x1, elementwise; t scalar in [0, 1]."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeMismatch(f"{x0.shape} vs {x1.shape}")
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("t must lie in [0, 1]")
    return (1.0 - t) * x0 + t * x1


def _stack_batch(batch):
    motions = np.stack([np.asarray(m, dtype=np.float64) for m, _ in batch])
    conds = [c for _, c in batch]
    beats = np.stack([c.beat for c in conds])
    styles = np.array([c.style_id for c in conds], dtype=np.int64)
    seeds = np.stack([c.seed_pose for c in conds])
    return motions, beats, styles, seeds


def _constraint_grads(cfg, ctx, pred_raw, gt_raw):
    """Weighted structural losses on the de-standardized prediction.

    Returns (component dict, total gradient with respect to pred_raw).
    Equivalent to summing the individual motion_* losses, but shares one
    rotation conversion, one FK pass per side, and one combined backward
    chain across the position-space terms.
    """
    skel = ctx.skel
    J = skel.n_joints
    values = {"pos": 0.0, "j": 0.0, "s": 0.0, "m": 0.0}
    grad = np.zeros_like(pred_raw)

    if cfg.lambda_pos > 0 or cfg.lambda_s > 0 or cfg.lambda_j > 0:
        sixd_pred, root_pred = motion.split_channels(pred_raw, J)
        sixd_gt, root_gt = motion.split_channels(gt_raw, J)
        rot_pred = rotation.rot6d_to_matrix(sixd_pred)
        grad_rot = np.zeros_like(rot_pred)
        grad_root = np.zeros(root_pred.shape)

        if cfg.lambda_pos > 0 or cfg.lambda_s > 0:
            pred_pos = sk.global_positions(skel, rot_pred, root_pred)
            gt_pos = sk.global_positions(skel, rotation.rot6d_to_matrix(sixd_gt), root_gt)
            grad_pos = np.zeros_like(pred_pos)
            if cfg.lambda_pos > 0:
                lg = constraints.position_loss(pred_pos, gt_pos)
                values["pos"] = lg.value
                grad_pos += cfg.lambda_pos * lg.grad
            if cfg.lambda_s > 0:
                lg = constraints.skeleton_loss(pred_pos, gt_pos, skel)
                values["s"] = lg.value
                grad_pos += cfg.lambda_s * lg.grad
            grad_rot, grad_root = sk.global_positions_backward(skel, grad_pos)

        if cfg.lambda_j > 0:
            rot_gt = rotation.rot6d_to_matrix(sixd_gt)
            diff = rot_pred - rot_gt
            M = ctx.anchors.points.T @ ctx.anchors.points
            n_terms = max(1, int(np.prod(sixd_pred.shape[:-1]))) * ctx.anchors.n_points
            dm = diff @ M
            values["j"] = float(np.sum(dm * diff)) / n_terms
            grad_rot = grad_rot + cfg.lambda_j * (2.0 / n_terms) * dm

        grad_sixd = rotation.rot6d_to_matrix_backward(sixd_pred, grad_rot)
        grad += motion.merge_channels(grad_sixd, grad_root)

    if cfg.lambda_m > 0:
        if ctx.encoder is None:
            raise ValueError("lambda_m > 0 requires an encoder in the context")
        lg = temporal.motion_loss_batch(ctx.encoder, pred_raw, gt_raw)
        values["m"] = lg.value
        grad += cfg.lambda_m * lg.grad
    return values, grad


def train_step(state, batch, cfg, ctx, forward_fn=None):
    """
    One training step on a batch of (gt_motion, Condition) pairs.

    GT motion is raw global-6D channels; flow time and source noise are
    sampled per element from (noise_seed, step). Returns the loss breakdown
    dict with keys step/simple/pos/j/s/m/total.

    ``forward_fn(x_t, beats, styles, seeds, ts) -> prediction`` replaces the
    network when given (test hook); no parameter update happens then.
    """
    gt_raw, beats, styles, seeds = _stack_batch(batch)
    B, T, C = gt_raw.shape
    rng = np.random.default_rng([cfg.noise_seed, state.step, 0xF10])
    ts = rng.uniform(0.0, 1.0, size=B)
    x0 = rng.standard_normal((B, T, C))
    x1n = ctx.normalizer.normalize(gt_raw)
    x_t = (1.0 - ts[:, None, None]) * x0 + ts[:, None, None] * x1n

    if forward_fn is not None:
        pred_n = np.asarray(forward_fn(x_t, beats, styles, seeds, ts), dtype=np.float64)
        simple = float(np.mean((pred_n - x1n) ** 2))
        pred_raw = ctx.normalizer.denormalize(pred_n)
        values, _ = _constraint_grads(cfg, ctx, pred_raw, gt_raw)
    else:
        tp = tape.Tape()
        ptens = net.param_tensors(tp, state.params)
        pred = net.forward_tape(tp, ptens, state.params.config, tp.leaf(x_t),
                                beats, styles, seeds, ts)
        diff = pred - tp.leaf(x1n)
        simple_t = (diff * diff).mean()
        simple = float(simple_t.data)
        pred_raw = ctx.normalizer.denormalize(pred.data)
        values, grad_raw = _constraint_grads(cfg, ctx, pred_raw, gt_raw)
        # chain through de-standardization: d raw / d normalized = std
        extra = {pred: grad_raw * ctx.normalizer.std} if np.any(grad_raw) else None
        grads = net.backward(tp, simple_t, ptens, extra_grads=extra)
        net.adam_step(state.params, grads, cfg.lr, state.adam)

    total = simple + (cfg.lambda_pos * values["pos"] + cfg.lambda_j * values["j"]
                      + cfg.lambda_s * values["s"] + cfg.lambda_m * values["m"])
    if not np.isfinite(total):
        raise NonFiniteLoss(f"non-finite loss at step {state.step}: {values}")
    state.step += 1
    return {"step": state.step, "simple": simple, "pos": values["pos"],
            "j": values["j"], "s": values["s"], "m": values["m"], "total": total}


def run_training(state, dataset, cfg, ctx, steps, log_fn=None):
    """
    Uniform-batch training loop; returns the per-step loss rows.

    ``dataset`` is a list of (motion, Condition) pairs. Batch indices are
    drawn deterministically from (noise_seed, step) so interrupted runs
    resume bit-identically.
    """
    rows = []
    for _ in range(steps):
        rng = np.random.default_rng([cfg.noise_seed, state.step, 0xBA7C])
        idx = rng.integers(0, len(dataset), size=min(cfg.batch_size, len(dataset)))
        row = train_step(state, [dataset[i] for i in idx], cfg, ctx)
        rows.append(row)
        if log_fn is not None:
            log_fn(row)
    return rows


def sample(params, cond, cfg, ctx, seed=None, forward_fn=None):
    """
    Euler-integrate from noise to a clean clip; returns raw (T, C) channels.

    Velocity is (x1_hat - x_t) / (1 - t) with t clamped to 1 - 1/(2S); the
    returned motion is the final x1 prediction, de-standardized.
    """
    if seed is None:
        seed = cfg.noise_seed
    entropy = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    T = cond.beat.shape[0]
    C = params.config.channels if params is not None else cond.seed_pose.shape[-1]
    S = cfg.sample_steps
    rng = np.random.default_rng(entropy + [0x5A3])
    x = rng.standard_normal((T, C))
    fwd = forward_fn if forward_fn is not None else (
        lambda x_t, t: net.forward(params, x_t, cond.with_time(t)))
    x1_hat = None
    for i in range(S):
        t = min(i / S, 1.0 - 1.0 / (2 * S))
        x1_hat = np.asarray(fwd(x, t), dtype=np.float64)
        v = (x1_hat - x) / (1.0 - t)
        x = x + v / S
    if not np.all(np.isfinite(x1_hat)):
        raise NonFiniteLoss("sampler produced non-finite values")
    return ctx.normalizer.denormalize(x1_hat)


def sample_many(params, conds, cfg, ctx, seed=None):
    """
    Batched sampler: one Euler loop over all clips at once.

    Produces exactly the clips that ``sample(params, conds[i], cfg, ctx,
    seed=[seed, i])`` would, batching the network forward per step.
    """
    if seed is None:
        seed = cfg.noise_seed
    n = len(conds)
    if n == 0:
        return []
    T = conds[0].beat.shape[0]
    C = params.config.channels
    S = cfg.sample_steps
    x = np.stack([
        np.random.default_rng([seed, i, 0x5A3]).standard_normal((T, C)) for i in range(n)
    ])
    beats = np.stack([c.beat for c in conds])
    styles = np.array([c.style_id for c in conds], dtype=np.int64)
    seeds = np.stack([c.seed_pose for c in conds])
    x1_hat = None
    for i in range(S):
        t = min(i / S, 1.0 - 1.0 / (2 * S))
        tp = tape.Tape()
        ptens = {k: tp.leaf(v) for k, v in params.values.items()}
        out = net.forward_tape(tp, ptens, params.config, tp.leaf(x),
                               beats, styles, seeds, np.full(n, t))
        x1_hat = out.data
        x = x + (x1_hat - x) / (1.0 - t) / S
    if not np.all(np.isfinite(x1_hat)):
        raise NonFiniteLoss("sampler produced non-finite values")
    return [ctx.normalizer.denormalize(x1_hat[i]) for i in range(n)]


def stream(params, cond_sequence, n_clips, cfg, ctx, seed=None, forward_fn=None):
    """
    Long-form generation: each clip reuses the previous clip's last
    SEED_FRAMES frames as its seed pose; the reused frames are not
    duplicated in the output. Output length = n_clips*(T - 8) + 8.
    """
    if n_clips < 1:
        raise ValueError("n_clips must be >= 1")
    if len(cond_sequence) < n_clips:
        raise ValueError(f"need {n_clips} conditions, got {len(cond_sequence)}")
    if seed is None:
        seed = cfg.noise_seed
    out = []
    prev_tail = None
    for i in range(n_clips):
        cond = cond_sequence[i]
        if prev_tail is not None:
            cond = net.Condition(cond.beat, cond.style_id, prev_tail, cond.t)
        clip = sample(params, cond, cfg, ctx, seed=[seed, i], forward_fn=forward_fn)
        prev_tail = clip[-net.SEED_FRAMES:].copy()
        out.append(clip if i == 0 else clip[net.SEED_FRAMES:])
    return np.concatenate(out, axis=0)
