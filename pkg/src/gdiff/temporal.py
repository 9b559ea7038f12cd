"""Multi-scale variational encoder over motion sequences.

Three temporal-convolution branches with strides 1, 2 and 4 (kernel 3, two
layers each) are mean-pooled over time and mapped to per-branch mean and
log-variance heads; their means concatenate into a single embedding of
dimension 3 * latent_dim regardless of sequence length. The encoder is
pre-trained as a VAE on ground-truth motion, then frozen; the motion-level
loss is the squared latent distance between a generated clip and its GT
counterpart under the frozen encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tape
from .constraints import LossGrad
from .errors import LengthMismatch, NonFiniteLoss, SequenceTooShort

STRIDES = (1, 2, 4)
MIN_FRAMES = 8
LOGVAR_RANGE = (-10.0, 10.0)


@dataclass(frozen=True)
class EncoderConfig:
    channels: int
    latent_dim: int = 64
    hidden: int = 64

    @property
    def embedding_dim(self):
        return len(STRIDES) * self.latent_dim


@dataclass
class TemporalEncoder:
    config: EncoderConfig
    values: dict
    frozen: bool = False

    def freeze(self):
        return replace(self, frozen=True)


def _encoder_shapes(cfg):
    shapes = {}
    for s in STRIDES:
        shapes[f"s{s}.c1_w"] = (3 * cfg.channels, cfg.hidden)
        shapes[f"s{s}.c1_b"] = (cfg.hidden,)
        shapes[f"s{s}.c2_w"] = (3 * cfg.hidden, cfg.hidden)
        shapes[f"s{s}.c2_b"] = (cfg.hidden,)
        shapes[f"s{s}.mu_w"] = (cfg.hidden, cfg.latent_dim)
        shapes[f"s{s}.mu_b"] = (cfg.latent_dim,)
        shapes[f"s{s}.lv_w"] = (cfg.hidden, cfg.latent_dim)
        shapes[f"s{s}.lv_b"] = (cfg.latent_dim,)
    return shapes


def init_encoder(seed, config):
    rng = np.random.default_rng(seed)
    values = {}
    for name, shape in _encoder_shapes(config).items():
        if name.endswith("_b"):
            values[name] = np.zeros(shape)
        else:
            values[name] = rng.standard_normal(shape) * np.sqrt(2.0 / shape[0])
    return TemporalEncoder(config, values)


def encode_tape(tp, ptens, cfg, x):
    """Record the encoder on a tape. x: Tensor (B, T, C). Returns (mu, logvar)."""
    if x.shape[1] < MIN_FRAMES:
        raise SequenceTooShort(f"need at least {MIN_FRAMES} frames, got {x.shape[1]}")
    mus, logvars = [], []
    for s in STRIDES:
        h = tape.conv1d(x, ptens[f"s{s}.c1_w"], ptens[f"s{s}.c1_b"], stride=s, pad=1).relu()
        h = tape.conv1d(h, ptens[f"s{s}.c2_w"], ptens[f"s{s}.c2_b"], stride=1, pad=1).relu()
        pooled = h.mean(axis=1)
        mus.append(pooled @ ptens[f"s{s}.mu_w"] + ptens[f"s{s}.mu_b"])
        lv = pooled @ ptens[f"s{s}.lv_w"] + ptens[f"s{s}.lv_b"]
        logvars.append(lv.clip(*LOGVAR_RANGE))
    return tape.concat(mus, axis=-1), tape.concat(logvars, axis=-1)


def encode(enc, motion_seq):
    """
    Deterministic embedding of one motion clip (mean heads, no sampling).

    motion_seq : (T, channels). Returns z of shape (3 * latent_dim,).
    """
    x = np.atleast_2d(np.asarray(motion_seq, dtype=np.float64))
    tp = tape.Tape()
    ptens = {k: tp.leaf(v) for k, v in enc.values.items()}
    mu, _ = encode_tape(tp, ptens, enc.config, tp.leaf(x[None]))
    return mu.data[0]


def encode_batch(enc, clips):
    """Embeddings for equally shaped clips: (B, T, C) -> (B, 3*latent_dim)."""
    x = np.asarray(clips, dtype=np.float64)
    tp = tape.Tape()
    ptens = {k: tp.leaf(v) for k, v in enc.values.items()}
    mu, _ = encode_tape(tp, ptens, enc.config, tp.leaf(x))
    return mu.data


@dataclass
class TemporalDecoder:
    """Fixed-window decoder used only for VAE pre-training."""

    frames: int
    channels: int
    values: dict


def init_decoder(seed, enc_cfg, frames, hidden=128):
    rng = np.random.default_rng(seed)
    d_in = enc_cfg.embedding_dim
    values = {
        "w1": rng.standard_normal((d_in, hidden)) * np.sqrt(2.0 / d_in),
        "b1": np.zeros(hidden),
        "w2": rng.standard_normal((hidden, frames * enc_cfg.channels)) * np.sqrt(1.0 / hidden),
        "b2": np.zeros(frames * enc_cfg.channels),
    }
    return TemporalDecoder(frames, enc_cfg.channels, values)


@dataclass
class VaeTrainer:
    enc: TemporalEncoder
    dec: TemporalDecoder
    lr: float
    rng: np.random.Generator
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def create(cls, enc, dec, lr=1e-3, seed=0):
        zeros = lambda d: {k: np.zeros_like(v) for k, v in d.items()}
        merged = dict(enc.values)
        merged.update({f"dec.{k}": v for k, v in dec.values.items()})
        return cls(enc, dec, lr, np.random.default_rng(seed), zeros(merged), zeros(merged))


def vae_train_step(trainer, batch, beta):
    """
    One reparameterized VAE step on a batch of GT motion windows (B, T, C).

    Returns (recon_mse, kl). The objective is recon + beta * KL; beta = 0
    reduces to a plain autoencoder (the KL term still reported, not used).
    """
    if trainer.enc.frozen:
        raise ValueError("encoder is frozen; cannot train")
    x = np.asarray(batch, dtype=np.float64)
    B = x.shape[0]
    tp = tape.Tape()
    ptens = {k: tp.leaf(v, requires_grad=True) for k, v in trainer.enc.values.items()}
    dtens = {k: tp.leaf(v, requires_grad=True) for k, v in trainer.dec.values.items()}

    mu, logvar = encode_tape(tp, ptens, trainer.enc.config, tp.leaf(x))
    eps = tp.leaf(trainer.rng.standard_normal(mu.shape))
    z = mu + (logvar * 0.5).exp() * eps
    h = (z @ dtens["w1"] + dtens["b1"]).relu()
    recon = (h @ dtens["w2"] + dtens["b2"]).reshape(B, trainer.dec.frames, trainer.dec.channels)
    diff = recon - tp.leaf(x)
    recon_mse = (diff * diff).mean()
    # Gaussian KL to N(0, I): mean over batch, summed over latent dims.
    kl = (-0.5 * (1.0 + logvar - mu * mu - logvar.exp())).sum(axis=-1).mean()
    loss = recon_mse + beta * kl if beta != 0.0 else recon_mse

    if not (np.isfinite(recon_mse.data) and np.isfinite(kl.data)):
        raise NonFiniteLoss(f"recon={recon_mse.data}, kl={kl.data}")

    tp.backward(loss)
    trainer.step += 1
    t = trainer.step
    named = {k: v for k, v in ptens.items()}
    named.update({f"dec.{k}": v for k, v in dtens.items()})
    targets = dict(trainer.enc.values)
    targets.update({f"dec.{k}": v for k, v in trainer.dec.values.items()})
    for name, tens in named.items():
        g = tens.grad if tens.grad is not None else np.zeros_like(tens.data)
        m = trainer.m[name] = 0.9 * trainer.m[name] + 0.1 * g
        v = trainer.v[name] = 0.999 * trainer.v[name] + 0.001 * g * g
        update = trainer.lr * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        targets[name] -= update
    return float(recon_mse.data), float(kl.data)


def pretrain_encoder(clips, latent_dim=64, hidden=64, steps=400, batch_size=16,
                     beta=1e-3, lr=1e-3, seed=0):
    """
    Pre-train the VAE on GT clips and return the frozen encoder.

    clips : (N, T, C) stacked equal-length motion windows.
    """
    clips = np.asarray(clips, dtype=np.float64)
    n, frames, channels = clips.shape
    cfg = EncoderConfig(channels=channels, latent_dim=latent_dim, hidden=hidden)
    enc = init_encoder(seed, cfg)
    dec = init_decoder(seed + 1, cfg, frames)
    trainer = VaeTrainer.create(enc, dec, lr=lr, seed=seed + 2)
    order_rng = np.random.default_rng(seed + 3)
    for _ in range(steps):
        idx = order_rng.integers(0, n, size=min(batch_size, n))
        vae_train_step(trainer, clips[idx], beta)
    return enc.freeze()


def motion_loss(enc, gen, gt):
    """
    Squared latent distance between a generated and a GT clip.

    Requires a frozen encoder and equal lengths. Returns LossGrad with the
    gradient with respect to the generated clip's channels.
    """
    lg = motion_loss_batch(enc, np.asarray(gen)[None], np.asarray(gt)[None])
    return LossGrad(lg.value, lg.grad[0])


def motion_loss_batch(enc, gen, gt):
    """Batched motion loss: mean over clips of ||z_gen - z_gt||^2."""
    if not enc.frozen:
        raise ValueError("motion loss requires a frozen encoder")
    gen = np.asarray(gen, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if gen.shape != gt.shape:
        raise LengthMismatch(f"generated {gen.shape} vs ground truth {gt.shape}")
    z_gt = encode_batch(enc, gt)

    tp = tape.Tape()
    ptens = {k: tp.leaf(v) for k, v in enc.values.items()}
    x = tp.leaf(gen, requires_grad=True)
    mu, _ = encode_tape(tp, ptens, enc.config, x)
    d = mu - tp.leaf(z_gt)
    loss = (d * d).sum(axis=-1).mean()
    tp.backward(loss)
    return LossGrad(float(loss.data), x.grad if x.grad is not None else np.zeros_like(gen))
