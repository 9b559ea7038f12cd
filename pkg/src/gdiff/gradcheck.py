"""Finite-difference verification of every analytic gradient path.

Runs on a deliberately tiny configuration (4-joint chain, 16 frames) so the
central-difference sweeps stay fast. Geometric losses are checked at 1e-5
relative error; paths through the convolution stacks at 1e-4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import constraints, flow, motion, net, rotation, synth, tape, temporal

GEOMETRIC_TOL = 1e-5
NETWORK_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def ok(self):
        return self.max_rel_err < self.tol


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _check_params(name, loss_fn, params_values, tol, analytic, rng, n_coords=96, h=1e-5):
    """FD over a random subset of flattened parameter coordinates."""
    names = sorted(params_values)
    sizes = {k: params_values[k].size for k in names}
    total = sum(sizes.values())
    coords = rng.choice(total, size=min(n_coords, total), replace=False)
    worst = 0.0
    for flat_idx in coords:
        run = 0
        for k in names:
            if flat_idx < run + sizes[k]:
                local = flat_idx - run
                break
            run += sizes[k]
        view = params_values[k].reshape(-1)
        orig = view[local]
        view[local] = orig + h
        up = loss_fn()
        view[local] = orig - h
        down = loss_fn()
        view[local] = orig
        fd = (up - down) / (2 * h)
        worst = max(worst, _rel(analytic[k].reshape(-1)[local], fd))
    return CheckResult(name, worst, tol)


def run_checks(seed=0, inject_broken=False):
    """All gradient checks on the tiny configuration; returns CheckResults."""
    rng = np.random.default_rng(seed)
    skel = synth.gen_skeleton("CHAIN(4)")
    J, T = skel.n_joints, 16
    C = motion.n_channels(J)
    anchors = constraints.anchors_for_skeleton(skel)

    def random_motion(batch=()):
        sixd = rotation.random_rot6d(rng, tuple(batch) + (T, J))
        root = 0.1 * rng.standard_normal(tuple(batch) + (T, 3))
        return motion.merge_channels(sixd, root)

    gt = random_motion()
    pred = random_motion() + 0.05 * rng.standard_normal((T, C))
    results = []

    err = constraints.fd_check(
        lambda x: constraints.motion_joint_loss(x, gt, anchors, J), pred, max_coords=96, rng=rng)
    results.append(CheckResult("joint_loss", err, GEOMETRIC_TOL))

    err = constraints.fd_check(
        lambda x: constraints.motion_skeleton_loss(skel, x, gt), pred, max_coords=96, rng=rng)
    results.append(CheckResult("skeleton_loss", err, GEOMETRIC_TOL))

    def pos_loss(x):
        lg = constraints.motion_position_loss(skel, x, gt)
        if inject_broken:
            g = lg.grad.copy()
            g.reshape(-1)[0] += 0.05
            lg = constraints.LossGrad(lg.value, g)
        return lg

    err = constraints.fd_check(pos_loss, pred, max_coords=96, rng=rng)
    results.append(CheckResult("position_loss", err, GEOMETRIC_TOL))

    pp = constraints.fd_check(
        lambda p: constraints.position_loss(p, motion.positions(skel, gt)),
        motion.positions(skel, pred), max_coords=96, rng=rng)
    results.append(CheckResult("position_loss_positions", pp, GEOMETRIC_TOL))
    ps = constraints.fd_check(
        lambda p: constraints.skeleton_loss(p, motion.positions(skel, gt), skel),
        motion.positions(skel, pred), max_coords=96, rng=rng)
    results.append(CheckResult("skeleton_loss_positions", ps, GEOMETRIC_TOL))

    enc = temporal.init_encoder(seed, temporal.EncoderConfig(C, latent_dim=8, hidden=12)).freeze()
    err = constraints.fd_check(
        lambda x: temporal.motion_loss(enc, x, gt), pred, max_coords=96, rng=rng)
    results.append(CheckResult("motion_loss", err, NETWORK_TOL))

    # network parameter gradients through the tape
    config = net.NetConfig(n_joints=J, hand_joints=(2, 3), hidden=16, blocks=2,
                           style_vocab=2, style_dim=4, time_dim=8)
    params = net.init_params(seed, config)
    B = 2
    x_t = rng.standard_normal((B, T, C))
    target = rng.standard_normal((B, T, C))
    beats = rng.random((B, T))
    styles = np.array([0, 1])
    seeds = rng.standard_normal((B, net.SEED_FRAMES, C))
    ts = rng.uniform(0, 1, B)

    def net_loss():
        tp = tape.Tape()
        ptens = {k: tp.leaf(v) for k, v in params.values.items()}
        out = net.forward_tape(tp, ptens, config, tp.leaf(x_t), beats, styles, seeds, ts)
        d = out - tp.leaf(target)
        return float((d * d).mean().data)

    tp = tape.Tape()
    ptens = net.param_tensors(tp, params)
    out = net.forward_tape(tp, ptens, config, tp.leaf(x_t), beats, styles, seeds, ts)
    d = out - tp.leaf(target)
    grads = net.backward(tp, (d * d).mean(), ptens)
    results.append(_check_params("network_backward", net_loss, params.values,
                                 GEOMETRIC_TOL, grads, rng))

    # end-to-end: flow regression plus every constraint term, vs parameters
    ctx = flow.TrainContext(skel, anchors, flow.Normalizer.identity(C), encoder=enc)
    cfg = flow.FlowConfig(lambda_pos=1.0, lambda_j=1.0, lambda_s=1.0, lambda_m=0.1)
    gt_batch = np.stack([random_motion() for _ in range(B)])
    x1n = ctx.normalizer.normalize(gt_batch)
    x_t2 = (1 - ts[:, None, None]) * rng.standard_normal((B, T, C)) + ts[:, None, None] * x1n

    def total_loss(return_grads=False):
        tp = tape.Tape()
        ptens = {k: tp.leaf(v, requires_grad=return_grads) for k, v in params.values.items()}
        pred = net.forward_tape(tp, ptens, config, tp.leaf(x_t2), beats, styles, seeds, ts)
        dd = pred - tp.leaf(x1n)
        simple = (dd * dd).mean()
        pred_raw = ctx.normalizer.denormalize(pred.data)
        values, grad_raw = flow._constraint_grads(cfg, ctx, pred_raw, gt_batch)
        total = float(simple.data) + (cfg.lambda_pos * values["pos"] + cfg.lambda_j * values["j"]
                                      + cfg.lambda_s * values["s"] + cfg.lambda_m * values["m"])
        if not return_grads:
            return total
        grads = net.backward(tp, simple, ptens,
                             extra_grads={pred: grad_raw * ctx.normalizer.std})
        return total, grads

    _, e2e_grads = total_loss(return_grads=True)
    results.append(_check_params("end_to_end_flow", total_loss, params.values,
                                 NETWORK_TOL, e2e_grads, rng, n_coords=64))
    return results
