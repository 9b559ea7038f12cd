"""Command-line surface.

Subcommands: fkdemo, synth, train, sample, stream, eval, gradcheck,
bvh-import, skeleton-gen. Reporting commands write a CSV plus a rendered PNG
figure; every command is deterministic given explicit seeds.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import bvh, constraints, flow, gradcheck, io, metrics as metr
from . import net, plotting, skeleton as sk, synth, temporal
from .errors import GdiffError, ParseError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_config_flags(p):
    p.add_argument("--config", help="key=value run configuration file")
    for f in fields(io.RunConfig):
        cast = {"int": int, "float": float, "str": str}[f.type]
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}",
                       type=cast, default=None, help=argparse.SUPPRESS)


def _run_config(args):
    rc = io.load_run_config(args.config) if args.config else io.RunConfig()
    for f in fields(io.RunConfig):
        override = getattr(args, f"cfg_{f.name}", None)
        if override is not None:
            setattr(rc, f.name, override)
    return rc


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


class DirDataset:
    """A dataset directory: skeleton.txt + manifest.csv + GDMO clips."""

    def __init__(self, directory):
        self.dir = Path(directory)
        if not self.dir.is_dir():
            raise ParseError(f"{directory}: not a directory")
        self.skel = io.load_skeleton(self.dir / "skeleton.txt")
        self.rows = io.read_manifest(self.dir)
        self.motions = []
        self.fps = None
        for row in self.rows:
            m, n_joints, fps = io.load_motion(self.dir / row["file"])
            if n_joints != self.skel.n_joints:
                raise ParseError(f"{row['file']}: {n_joints} joints, skeleton has {self.skel.n_joints}")
            self.motions.append(m)
            self.fps = fps

    def __len__(self):
        return len(self.rows)

    def condition(self, i):
        row = self.rows[i]
        frames = row["frames"]
        if row["period"] > 0:
            track = synth.beat_track(synth.beat_frames(row["period"], frames), frames)
        else:
            track = np.zeros(frames)
        return net.Condition(track, row["style"], self.motions[i][: net.SEED_FRAMES].copy())

    def cond_beats(self, i):
        row = self.rows[i]
        if row["period"] <= 0:
            return np.array([], dtype=np.int64)
        return synth.beat_frames(row["period"], row["frames"])

    def pairs(self, indices=None):
        indices = range(len(self)) if indices is None else indices
        return [(self.motions[i], self.condition(i)) for i in indices]


def _infer_hand_joints(skel, rc):
    template_hands = synth.hand_joints_for(rc.template)
    try:
        template_skel = synth.gen_skeleton(rc.template)
        if template_skel.names == skel.names:
            return template_hands
    except GdiffError:
        pass
    tags = ("hand", "wrist", "finger", "thumb", "elbow")
    return tuple(j for j, name in enumerate(skel.names)
                 if any(t in name.lower() for t in tags))


def _net_config(rc, skel):
    return net.NetConfig(
        n_joints=skel.n_joints, hand_joints=_infer_hand_joints(skel, rc),
        hidden=rc.hidden, blocks=rc.blocks, style_vocab=max(rc.n_styles, 1),
        style_dim=rc.style_dim, time_dim=rc.time_dim,
    )


def _encoder(rc, out, ds, path=None):
    """Load the temporal encoder, or pre-train it on the dataset and cache it."""
    for candidate in ([Path(path)] if path else []) + [out / "encoder.gdpw"]:
        if candidate.exists():
            return io.load_encoder(candidate)
    clips = np.stack(ds.motions)
    enc = temporal.pretrain_encoder(
        clips, latent_dim=rc.latent_dim, hidden=rc.enc_hidden, steps=rc.vae_steps,
        beta=rc.vae_beta, lr=rc.vae_lr, seed=rc.seed,
    )
    io.save_encoder(out / "encoder.gdpw", enc)
    return enc


# -- commands -----------------------------------------------------------------

def cmd_fkdemo(args, parser):
    if args.depth < 2:
        parser.error("--depth must be >= 2")
    if not 0.0 <= args.epsilon < np.pi:
        parser.error("--epsilon must lie in [0, pi)")
    table = sk.error_accumulation_experiment(args.depth, args.epsilon)
    out = _out_dir(args.out)
    csv_path = out / "fkdemo.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("depth,local_error,global_error\n")
        for d, le, ge in zip(table["depth"], table["local"], table["global"]):
            f.write(f"{d},{le:.12g},{ge:.12g}\n")
    fig_path = plotting.plot_error_accumulation(table, out / "fkdemo.png")
    print(f"{'depth':>6} {'local':>12} {'global':>12} {'ratio':>8}")
    for d, le, ge in zip(table["depth"], table["local"], table["global"]):
        ratio = le / ge if ge > 0 else float("nan")
        print(f"{d:>6} {le:>12.6f} {ge:>12.6f} {ratio:>8.2f}")
    print(f"wrote {csv_path} and {fig_path}")
    return 0


def cmd_synth(args, parser):
    rc = _run_config(args)
    cfg = rc.synth_config()
    ds = synth.gen_dataset(cfg)
    out = _out_dir(args.out)
    skel = synth.gen_skeleton(cfg.template)
    io.save_skeleton(out / "skeleton.txt", skel)
    rows = []
    for i, clip in enumerate(ds.clips):
        name = f"clip_{i:04d}.gdmo"
        io.save_motion(out / name, clip.motion, skel.n_joints, cfg.fps)
        rows.append({"file": name, "style": clip.style, "seed": clip.seed,
                     "period": f"{clip.period!r}", "fps": cfg.fps, "frames": cfg.frames})
    io.write_manifest(out, rows)
    n_val = len(ds.val)
    print(f"wrote {len(ds.clips)} clips ({len(ds.train)} train / {n_val} val) to {out}")
    return 0


def cmd_train(args, parser):
    rc = _run_config(args)
    dataset_dir = args.dataset or rc.dataset_dir
    if not dataset_dir:
        parser.error("--dataset (or dataset_dir in the config) is required")
    ds = DirDataset(dataset_dir)
    out = _out_dir(args.out)
    config = _net_config(rc, ds.skel)

    n_val = max(1, len(ds) // 10)
    train_idx = range(len(ds) - n_val)
    pairs = ds.pairs(train_idx)

    cfg = rc.flow_config()
    if args.no_lpos:
        cfg = replace(cfg, lambda_pos=0.0)
    if args.no_lj:
        cfg = replace(cfg, lambda_j=0.0)
    if args.no_ls:
        cfg = replace(cfg, lambda_s=0.0)
    if args.no_lm:
        cfg = replace(cfg, lambda_m=0.0)

    encoder = None
    if cfg.lambda_m > 0:
        encoder = _encoder(rc, out, ds, path=args.encoder)

    if args.resume:
        state, normalizer = io.load_checkpoint(args.resume, config)
    else:
        state = flow.TrainState.fresh(net.init_params(rc.seed, config))
        normalizer = flow.Normalizer.fit(np.stack([m for m, _ in pairs]))
    ctx = flow.TrainContext(ds.skel, constraints.anchors_for_skeleton(ds.skel),
                            normalizer, encoder=encoder)

    steps = args.steps if args.steps is not None else rc.train_steps
    log_path = out / "loss.csv"
    rows = []
    with io.LossLog(log_path, append=bool(args.resume)) as log:
        rows = flow.run_training(state, pairs, cfg, ctx, steps, log_fn=log.write)
    ckpt = out / "params.gdpw"
    io.save_checkpoint(ckpt, state, normalizer)
    if rows:
        plotting.plot_loss_curves(rows, out / "loss_curves.png")
        print(f"step {rows[-1]['step']}: total {rows[-1]['total']:.5f} "
              f"(simple {rows[-1]['simple']:.5f})")
    print(f"wrote {ckpt} and {log_path}")
    return 0


def cmd_sample(args, parser):
    rc = _run_config(args)
    ds = DirDataset(args.dataset)
    config = _net_config(rc, ds.skel)
    state, normalizer = io.load_checkpoint(args.params, config)
    ctx = flow.TrainContext(ds.skel, constraints.anchors_for_skeleton(ds.skel), normalizer)
    cfg = rc.flow_config()
    out = _out_dir(args.out)
    io.save_skeleton(out / "skeleton.txt", ds.skel)
    count = min(args.count, len(ds))
    rows = []
    base_seed = rc.seed
    for k in range(count):
        i = (args.offset + k) % len(ds)
        clip = flow.sample(state.params, ds.condition(i), cfg, ctx, seed=[base_seed, i])
        name = f"gen_{k:04d}.gdmo"
        io.save_motion(out / name, clip, ds.skel.n_joints, ds.fps or rc.fps)
        row = ds.rows[i]
        rows.append({"file": name, "style": row["style"], "seed": row["seed"],
                     "period": f"{row['period']!r}", "fps": row["fps"], "frames": clip.shape[0]})
    io.write_manifest(out, rows)
    print(f"wrote {count} sampled clips to {out}")
    return 0


def cmd_stream(args, parser):
    rc = _run_config(args)
    ds = DirDataset(args.dataset)
    config = _net_config(rc, ds.skel)
    state, normalizer = io.load_checkpoint(args.params, config)
    ctx = flow.TrainContext(ds.skel, constraints.anchors_for_skeleton(ds.skel), normalizer)
    cfg = rc.flow_config()

    row = ds.rows[args.index]
    T = row["frames"]
    period = row["period"]
    hop = T - net.SEED_FRAMES
    total = args.clips * hop + net.SEED_FRAMES
    track = synth.beat_track(synth.beat_frames(period, total + T), total + T) if period > 0 \
        else np.zeros(total + T)
    conds = []
    for i in range(args.clips):
        start = i * hop
        conds.append(net.Condition(track[start : start + T], row["style"],
                                   ds.motions[args.index][: net.SEED_FRAMES].copy()))
    clip = flow.stream(state.params, conds, args.clips, cfg, ctx, seed=rc.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_motion(out, clip, ds.skel.n_joints, ds.fps or rc.fps)
    print(f"wrote {clip.shape[0]} frames ({args.clips} clips) to {out}")
    return 0


def cmd_eval(args, parser):
    rc = _run_config(args)
    gen = DirDataset(args.gen)
    gt = DirDataset(args.gt)
    out = _out_dir(args.out)
    enc = _encoder(rc, out, gt, path=args.encoder)

    def beat_score(ds):
        scores = []
        for i in range(len(ds)):
            cond = ds.cond_beats(i)
            if cond.size == 0:
                continue
            found = metr.detect_motion_beats(ds.motions[i], ds.skel)
            scores.append(metr.beat_align(found, cond, rc.beat_sigma))
        return float(np.mean(scores)) if scores else float("nan")

    def jerk(ds):
        return float(np.mean([metr.smoothness_report(m, ds.skel)["overall"] for m in ds.motions]))

    values = {
        "fgd": metr.fgd(enc, np.stack(gen.motions), np.stack(gt.motions)),
        "beat_align_gen": beat_score(gen),
        "beat_align_gt": beat_score(gt),
        "diversity_gen": metr.diversity(np.stack(gen.motions)),
        "diversity_gt": metr.diversity(np.stack(gt.motions)),
        "jerk_gen": jerk(gen),
        "jerk_gt": jerk(gt),
    }
    values["diversity_delta"] = abs(values["diversity_gen"] - values["diversity_gt"])
    csv_path = out / "metrics.csv"
    io.write_metrics_csv(csv_path, values)
    plotting.plot_metric_bars(values, out / "metrics.png")
    width = max(len(k) for k in values)
    for k, v in values.items():
        print(f"{k:<{width}}  {v:.6f}")
    print(f"wrote {csv_path}")
    return 0


def cmd_gradcheck(args, parser):
    results = gradcheck.run_checks(seed=args.seed or 0,
                                   inject_broken=args.inject_broken_gradient)
    width = max(len(r.name) for r in results)
    ok = True
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{r.name:<{width}}  max_rel_err={r.max_rel_err:.3e}  tol={r.tol:.0e}  {status}")
        ok = ok and r.ok
    print("all gradient checks passed" if ok else "gradient check FAILED")
    return 0 if ok else 3


def cmd_bvh_import(args, parser):
    skel, seq, fps = bvh.bvh_import(args.input)
    out = _out_dir(args.out)
    io.save_skeleton(out / "skeleton.txt", skel)
    name = "motion_0000.gdmo"
    io.save_motion(out / name, seq, skel.n_joints, fps)
    io.write_manifest(out, [{"file": name, "style": 0, "seed": 0, "period": 0.0,
                             "fps": fps, "frames": seq.shape[0]}])
    print(f"imported {skel.n_joints} joints, {seq.shape[0]} frames at {fps:.3f} fps -> {out}")
    return 0


def cmd_skeleton_gen(args, parser):
    skel = synth.gen_skeleton(args.template)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_skeleton(out, skel)
    print(f"wrote {skel.n_joints}-joint skeleton to {out}")
    return 0


def build_parser():
    parser = _Parser(prog="gdiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fkdemo", help="error-accumulation experiment")
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--out", default="out/fkdemo")
    p.set_defaults(fn=cmd_fkdemo)

    p = sub.add_parser("synth", help="generate the synthetic dataset")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train the flow-matching generator")
    _add_config_flags(p)
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--encoder", help="pre-trained temporal encoder file")
    p.add_argument("--no-lpos", action="store_true", help="disable the position loss")
    p.add_argument("--no-lj", action="store_true", help="disable the joint structure loss")
    p.add_argument("--no-ls", action="store_true", help="disable the skeleton structure loss")
    p.add_argument("--no-lm", action="store_true", help="disable the temporal structure loss")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="sample clips conditioned on dataset rows")
    _add_config_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--offset", type=int, default=0)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("stream", help="long-form generation via seed-pose reuse")
    _add_config_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clips", type=int, default=5)
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(fn=cmd_stream)

    p = sub.add_parser("eval", help="evaluate generated clips against ground truth")
    _add_config_flags(p)
    p.add_argument("--gen", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--encoder")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-broken-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bvh-import", help="import a BVH file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bvh_import)

    p = sub.add_parser("skeleton-gen", help="write a template skeleton file")
    p.add_argument("--template", default="HUMANOID13")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_skeleton_gen)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        return args.fn(args, parser)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    except ParseError as e:
        print(f"gdiff: error: {e}", file=sys.stderr)
        return 2
    except GdiffError as e:
        print(f"gdiff: error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"gdiff: error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"gdiff: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
