"""Evaluation metrics: feature-space Fréchet distance, beat alignment,
diversity, and a jerk-based smoothness diagnostic."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import motion, rotation, temporal
from .errors import (DimensionMismatch, EmptyConditionBeats, NonPSD,
                     SequenceTooShort, ShapeMismatch, TooFewClips)

PSD_TOL = -1e-8


def extract_features(enc, clips):
    """Frozen-encoder embedding per clip: (N, T, C) or list -> (N, 3*latent)."""
    if not enc.frozen:
        raise ValueError("feature extraction requires a frozen encoder")
    clips = np.asarray(clips, dtype=np.float64)
    return temporal.encode_batch(enc, clips)


@dataclass(frozen=True)
class FeatureStats:
    """Gaussian fit (mean, covariance) of a set of feature embeddings."""

    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def fit(cls, features):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 2:
            raise TooFewClips("need at least 2 feature vectors to fit statistics")
        cov = np.cov(features, rowvar=False)
        return cls(features.mean(axis=0), np.atleast_2d(cov))


def _psd_sqrt(cov):
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < PSD_TOL:
        raise NonPSD(f"covariance has eigenvalue {vals.min():.3e}")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(a, b):
    """
    Fréchet distance between two Gaussian feature fits.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the matrix
    square root taken through the symmetric eigendecomposition of
    S_a^{1/2} S_b S_a^{1/2}; tiny negative eigenvalues are clamped to zero.
    """
    if a.mean.shape != b.mean.shape or a.cov.shape != b.cov.shape:
        raise DimensionMismatch(f"{a.mean.shape}/{a.cov.shape} vs {b.mean.shape}/{b.cov.shape}")
    half = _psd_sqrt(a.cov)
    inner = half @ b.cov @ half
    inner = (inner + inner.T) / 2.0
    vals = np.linalg.eigh(inner)[0]
    if vals.min() < PSD_TOL * max(1.0, abs(vals.max())):
        raise NonPSD(f"cross-covariance eigenvalue {vals.min():.3e}")
    tr_sqrt = np.sum(np.sqrt(np.clip(vals, 0.0, None)))
    d = a.mean - b.mean
    value = float(d @ d + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr_sqrt)
    return max(value, 0.0)


def fgd(enc, clips_a, clips_b):
    """Fréchet distance between the embedding statistics of two clip sets."""
    stats_a = FeatureStats.fit(extract_features(enc, clips_a))
    stats_b = FeatureStats.fit(extract_features(enc, clips_b))
    return frechet_distance(stats_a, stats_b)


def angular_speed_envelope(motion_seq, skel):
    """Mean joint angular speed per interior frame (central differences)."""
    motion_seq = np.asarray(motion_seq, dtype=np.float64)
    rots = motion.rotmats(motion_seq, skel.n_joints)
    # speed at frame t from the rotation between t-1 and t+1
    speed = rotation.geodesic_distance(rots[:-2], rots[2:]) / 2.0
    return speed.mean(axis=-1)


def detect_motion_beats(motion_seq, skel, smooth=5):
    """
    Kinematic beats: strict local minima of the smoothed mean joint
    angular-speed envelope. Returns strictly increasing frame indices.
    """
    motion_seq = np.asarray(motion_seq, dtype=np.float64)
    if motion_seq.shape[0] < 5:
        raise SequenceTooShort("beat detection needs at least 5 frames")
    env = angular_speed_envelope(motion_seq, skel)
    pad = smooth // 2
    padded = np.pad(env, pad, mode="edge")
    env = np.convolve(padded, np.ones(smooth) / smooth, mode="valid")
    interior = (env[1:-1] < env[:-2]) & (env[1:-1] < env[2:])
    # envelope index k corresponds to motion frame k + 1
    return np.flatnonzero(interior) + 2


def beat_align(motion_beats, cond_beats, sigma_frames=3.0):
    """
    Mean Gaussian-kernel score of each motion beat's distance to the
    nearest condition beat: (1/|bm|) sum exp(-min (bm-ba)^2 / (2 sigma^2)).

    Empty motion beats score 0 (with a warning); empty condition beats are
    an error.
    """
    cond_beats = np.asarray(cond_beats, dtype=np.float64)
    motion_beats = np.asarray(motion_beats, dtype=np.float64)
    if cond_beats.size == 0:
        raise EmptyConditionBeats("no condition beats to align against")
    if motion_beats.size == 0:
        warnings.warn("no motion beats detected; beat alignment is 0", stacklevel=2)
        return 0.0
    d = motion_beats[:, None] - cond_beats[None, :]
    nearest_sq = np.min(d * d, axis=1)
    return float(np.mean(np.exp(-nearest_sq / (2.0 * sigma_frames**2))))


def diversity(clips):
    """Mean over unordered clip pairs of the mean absolute channel difference."""
    clips = np.asarray(clips, dtype=np.float64)
    if clips.ndim < 2 or clips.shape[0] < 2:
        raise TooFewClips("diversity needs at least 2 clips")
    n = clips.shape[0]
    flat = clips.reshape(n, -1)
    total = 0.0
    for i in range(n - 1):
        total += np.mean(np.abs(flat[i + 1 :] - flat[i]), axis=1).sum()
    return float(total / (n * (n - 1) / 2))


def smoothness_report(motion_seq, skel):
    """
    Per-joint RMS jerk (third difference of world positions).

    Returns {'per_joint': (J,) array, 'overall': float}; zero for constant
    poses and for linear root translation.
    """
    motion_seq = np.asarray(motion_seq, dtype=np.float64)
    if motion_seq.shape[0] < 4:
        raise SequenceTooShort("jerk needs at least 4 frames")
    pos = motion.positions(skel, motion_seq)  # (T, J, 3)
    jerk = pos[3:] - 3 * pos[2:-1] + 3 * pos[1:-2] - pos[:-3]
    per_joint = np.sqrt(np.mean(jerk**2, axis=(0, 2)))
    return {"per_joint": per_joint, "overall": float(np.sqrt(np.mean(jerk**2)))}
