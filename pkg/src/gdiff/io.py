"""File formats: GDMO motion files, GDPW parameter files, skeleton text,
flat key=value run configs, dataset manifests, and CSV logs.

Everything is little-endian and float64 on disk; whatever the toolkit
writes it re-reads bit-exactly.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import flow, net, skeleton as sk, synth, temporal
from .errors import BadConfig, ParseError

MOTION_MAGIC = b"GDMO"
PARAMS_MAGIC = b"GDPW"
FORMAT_VERSION = 1


# -- motion files ------------------------------------------------------------

def save_motion(path, motion_seq, n_joints, fps):
    """Write a (T, J*6+3) float64 motion sequence as a GDMO file."""
    m = np.ascontiguousarray(motion_seq, dtype=np.float64)
    frames, channels = m.shape
    if channels != n_joints * 6 + 3:
        raise ParseError(f"channels {channels} != J*6+3 for J={n_joints}")
    with open(path, "wb") as f:
        f.write(MOTION_MAGIC)
        f.write(struct.pack("<IIIIf", FORMAT_VERSION, frames, n_joints, channels, fps))
        f.write(m.astype("<f8").tobytes())


def load_motion(path):
    """Read a GDMO file -> (motion (T, C), n_joints, fps)."""
    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:4] != MOTION_MAGIC:
        raise ParseError(f"{path}: not a GDMO motion file")
    version, frames, n_joints, channels, fps = struct.unpack("<IIIIf", raw[4:24])
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported GDMO version {version}")
    if channels != n_joints * 6 + 3:
        raise ParseError(f"{path}: channel count {channels} != J*6+3")
    expected = 24 + frames * channels * 8
    if len(raw) != expected:
        raise ParseError(f"{path}: payload is {len(raw) - 24} bytes, expected {frames * channels * 8}")
    data = np.frombuffer(raw[24:], dtype="<f8").reshape(frames, channels).copy()
    return data, n_joints, float(fps)


# -- named parameter arrays ---------------------------------------------------

def save_params(path, values):
    """Write an ordered dict of named float64 arrays as a GDPW file."""
    with open(path, "wb") as f:
        f.write(PARAMS_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(values)))
        for name, arr in values.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
            f.write(arr.astype("<f8").tobytes())


def load_params(path):
    """Read a GDPW file back into an ordered name -> array dict."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != PARAMS_MAGIC:
        raise ParseError(f"{path}: not a GDPW parameter file")
    version, count = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported GDPW version {version}")
    pos = 12
    values = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", raw, pos) if ndim else ()
            pos += 4 * ndim
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(shape).copy()
            pos += 8 * n
            values[name] = arr
    except (struct.error, ValueError) as e:
        raise ParseError(f"{path}: truncated GDPW file ({e})") from e
    if pos != len(raw):
        raise ParseError(f"{path}: {len(raw) - pos} trailing bytes")
    return values


# -- checkpoints (model + optimizer + normalizer) ------------------------------

def save_checkpoint(path, state, normalizer):
    values = {}
    for k, v in state.params.values.items():
        values[f"model.{k}"] = v
    for k, v in state.adam.m.items():
        values[f"adam.m.{k}"] = v
    for k, v in state.adam.v.items():
        values[f"adam.v.{k}"] = v
    values["adam.step"] = np.array([float(state.adam.step)])
    values["train.step"] = np.array([float(state.step)])
    values["norm.mean"] = normalizer.mean
    values["norm.std"] = normalizer.std
    save_params(path, values)


def load_checkpoint(path, config):
    """Rebuild (TrainState, Normalizer) against a NetConfig; shapes must match."""
    values = load_params(path)
    params = net.ModelParams(config, {})
    adam = net.AdamState(0, {}, {})
    for name, arr in values.items():
        if name.startswith("model."):
            params.values[name[6:]] = arr
        elif name.startswith("adam.m."):
            adam.m[name[7:]] = arr
        elif name.startswith("adam.v."):
            adam.v[name[7:]] = arr
    expected = {k: v for k, v in net.init_params(0, config).values.items()}
    if set(expected) != set(params.values):
        raise BadConfig(f"{path}: parameter names do not match the configuration")
    for k, v in expected.items():
        if params.values[k].shape != v.shape:
            raise BadConfig(f"{path}: {k} has shape {params.values[k].shape}, expected {v.shape}")
    adam.step = int(values["adam.step"][0])
    state = flow.TrainState(params, adam, step=int(values["train.step"][0]))
    normalizer = flow.Normalizer(values["norm.mean"], values["norm.std"])
    return state, normalizer


def save_encoder(path, enc):
    values = {f"enc.{k}": v for k, v in enc.values.items()}
    cfg = enc.config
    values["meta.config"] = np.array([float(cfg.channels), float(cfg.latent_dim), float(cfg.hidden)])
    save_params(path, values)


def load_encoder(path, frozen=True):
    values = load_params(path)
    if "meta.config" not in values:
        raise ParseError(f"{path}: missing encoder config record")
    channels, latent, hidden = (int(x) for x in values["meta.config"])
    cfg = temporal.EncoderConfig(channels=channels, latent_dim=latent, hidden=hidden)
    enc = temporal.TemporalEncoder(cfg, {k[4:]: v for k, v in values.items() if k.startswith("enc.")},
                                   frozen=frozen)
    missing = set(temporal.init_encoder(0, cfg).values) - set(enc.values)
    if missing:
        raise ParseError(f"{path}: missing encoder arrays {sorted(missing)}")
    return enc


# -- skeleton text format ------------------------------------------------------

def save_skeleton(path, skel):
    lines = ["# name parent_index ox oy oz"]
    for k in range(skel.n_joints):
        ox, oy, oz = (float(v) for v in skel.offsets[k])
        lines.append(f"{skel.names[k]} {skel.parents[k]} {ox!r} {oy!r} {oz!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_skeleton(path):
    names, parents, offsets = [], [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ParseError(f"expected 'name parent ox oy oz', got {len(parts)} fields", line=lineno)
        try:
            parents.append(int(parts[1]))
            offsets.append([float(p) for p in parts[2:]])
        except ValueError as e:
            raise ParseError(str(e), line=lineno) from e
        names.append(parts[0])
    if not names:
        raise ParseError("no joints found", line=1)
    try:
        return sk.Skeleton(tuple(names), np.array(parents), np.array(offsets))
    except ValueError as e:
        raise ParseError(f"invalid skeleton: {e}", line=1) from e


# -- run configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    """Flat key=value run configuration; every key has a default."""

    template: str = "HUMANOID13"
    skeleton: str = ""
    dataset_dir: str = ""
    out_dir: str = "out"
    seed: int = 0
    # synthetic data
    frames: int = 64
    fps: float = 15.0
    n_clips: int = 256
    n_styles: int = 4
    beat_period_min: float = 10.0
    beat_period_max: float = 16.0
    # generator network
    hidden: int = 128
    blocks: int = 4
    style_dim: int = 16
    time_dim: int = 32
    # temporal encoder / VAE pre-training
    latent_dim: int = 64
    enc_hidden: int = 64
    vae_steps: int = 400
    vae_beta: float = 1e-3
    vae_lr: float = 1e-3
    # flow training and sampling
    sample_steps: int = 20
    lambda_pos: float = 1.0
    lambda_j: float = 1.0
    lambda_s: float = 1.0
    lambda_m: float = 0.1
    lr: float = 1e-4
    batch_size: int = 16
    train_steps: int = 2000
    # metrics
    beat_sigma: float = 3.0

    def flow_config(self):
        return flow.FlowConfig(
            sample_steps=self.sample_steps, lambda_pos=self.lambda_pos,
            lambda_j=self.lambda_j, lambda_s=self.lambda_s, lambda_m=self.lambda_m,
            noise_seed=self.seed, lr=self.lr, batch_size=self.batch_size,
        )

    def synth_config(self):
        return synth.SynthConfig(
            template=self.template, frames=self.frames, fps=self.fps,
            n_clips=self.n_clips, n_styles=self.n_styles,
            beat_period=(self.beat_period_min, self.beat_period_max), seed=self.seed,
        )


def load_run_config(path):
    """Parse a key=value file; unknown keys and bad values are errors."""
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    casts = {"int": int, "float": float, "str": str}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in types:
            raise ParseError(f"unknown configuration key {key!r}", line=lineno)
        try:
            setattr(cfg, key, casts[types[key]](value))
        except (KeyError, ValueError) as e:
            raise ParseError(f"bad value for {key}: {e}", line=lineno) from e
    return cfg


# -- manifests and CSV reports ----------------------------------------------------

MANIFEST_NAME = "manifest.csv"
MANIFEST_FIELDS = ("file", "style", "seed", "period", "fps", "frames")


def write_manifest(directory, rows):
    """rows: iterable of dicts with the MANIFEST_FIELDS keys."""
    path = Path(directory) / MANIFEST_NAME
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def read_manifest(directory):
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise ParseError(f"{path}: manifest not found")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise ParseError(f"{path}: bad manifest header {reader.fieldnames}")
        rows = []
        for row in reader:
            rows.append({
                "file": row["file"], "style": int(row["style"]), "seed": int(row["seed"]),
                "period": float(row["period"]), "fps": float(row["fps"]),
                "frames": int(row["frames"]),
            })
    return rows


class LossLog:
    """Append-only CSV training log: step,simple,pos,j,s,m,total."""

    def __init__(self, path, append=False):
        self.path = Path(path)
        fresh = not (append and self.path.exists())
        self._fh = open(self.path, "a" if append else "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh)
        if fresh:
            self._writer.writerow(flow.LOSS_COLUMNS)

    def write(self, row):
        self._writer.writerow([row["step"]] + [f"{row[k]:.10g}" for k in flow.LOSS_COLUMNS[1:]])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_metrics_csv(path, values):
    """Machine-readable metric,value CSV."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        for name, value in values.items():
            writer.writerow([name, f"{value:.10g}"])
