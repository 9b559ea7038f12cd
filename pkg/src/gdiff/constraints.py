"""Spatial structure losses with analytic gradients.

Three losses supervise a predicted pose against ground truth:

* joint structure: N non-coplanar anchor points per joint are rotated by the
  predicted and GT global rotations; the mean squared anchor displacement
  uniquely pins down each rotation (the anchors span 3D).
* skeleton structure: the matrix of pairwise cosines between unit bone
  directions is matched between prediction and GT, constraining relative limb
  orientation without caring about rigid placement.
* position: plain mean squared joint-position error.

Each loss returns a LossGrad whose gradient matches its input layout; the
``motion_*`` wrappers chain those gradients back to the (J*6 + 3) motion
channel layout through FK and the 6D orthonormalization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import motion, rotation
from . import skeleton as sk
from .errors import DegenerateBone, NonPositiveScale, ShapeMismatch

MIN_BONE_LENGTH = 1e-8


@dataclass(frozen=True)
class LossGrad:
    """Scalar loss value plus gradient with the same layout as the input."""

    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class AnchorSet:
    """Local anchor points shared by every joint; must span 3D."""

    points: np.ndarray  # (N, 3)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 3:
            raise ValueError(f"need at least 3 points of dim 3, got {pts.shape}")
        if np.linalg.matrix_rank(pts) != 3:
            raise ValueError("anchor points must span 3D (rank 3)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self):
        return self.points.shape[0]


def default_anchors(scale):
    """Six axis-aligned anchors {+-scale * e_i}: non-coplanar by construction."""
    if not scale > 0:
        raise NonPositiveScale(f"anchor scale must be positive, got {scale}")
    eye = np.eye(3)
    return AnchorSet(np.concatenate([scale * eye, -scale * eye], axis=0))


def anchors_for_skeleton(skel):
    """Default anchors scaled to 0.5x the skeleton's mean rest bone length."""
    lengths = [np.linalg.norm(skel.rest_positions[c] - skel.rest_positions[p])
               for p, c in skel.edges]
    lengths = [l for l in lengths if l > MIN_BONE_LENGTH]
    scale = 0.5 * float(np.mean(lengths)) if lengths else 0.5
    return default_anchors(scale)


def joint_loss(pred_sixd, gt_sixd, anchors):
    """
    Mean squared displacement of rotated anchors, pred vs GT.

    Parameters
    ----------
    pred_sixd : array_like, shape (*, K, 6)
        Predicted raw 6D rotations (pre-orthonormalization).
    gt_sixd : array_like, shape (*, K, 6)
        Ground-truth 6D rotations.
    anchors : AnchorSet

    Returns
    -------
    LossGrad
        value = mean over batch, joints, anchors of ||R v - R_gt v||^2;
        grad is with respect to the raw 6D input, chained through the
        Gram-Schmidt orthonormalization.
    """
    pred_sixd = np.asarray(pred_sixd, dtype=np.float64)
    gt_sixd = np.asarray(gt_sixd, dtype=np.float64)
    if pred_sixd.shape != gt_sixd.shape:
        raise ShapeMismatch(f"{pred_sixd.shape} vs {gt_sixd.shape}")
    R = rotation.rot6d_to_matrix(pred_sixd)
    R_gt = rotation.rot6d_to_matrix(gt_sixd)
    D = R - R_gt

    V = anchors.points
    M = V.T @ V  # (3, 3), sum of v v^T over anchors
    n_terms = max(1, int(np.prod(pred_sixd.shape[:-1]))) * anchors.n_points

    # sum_n ||D v_n||^2 = tr(D^T D M); gradient in D is 2 D M.
    DM = D @ M
    value = float(np.sum(DM * D)) / n_terms
    grad_R = (2.0 / n_terms) * DM
    grad = rotation.rot6d_to_matrix_backward(pred_sixd, grad_R)
    return LossGrad(value, grad)


def bone_edges(skel):
    """(parent, child) pairs with non-degenerate rest length, in child order.

    Rest-degenerate bones are dropped with a warning; their direction is
    undefined in every pose.
    """
    edges = []
    for p, c in skel.edges:
        if np.linalg.norm(skel.rest_positions[c] - skel.rest_positions[p]) <= MIN_BONE_LENGTH:
            warnings.warn(f"dropping zero-length rest bone {p}->{c}", stacklevel=2)
            continue
        edges.append((p, c))
    return edges


def bone_directions(skel, pos):
    """
    Unit bone direction vectors in global space, one per valid edge.

    pos : (*, J, 3) joint positions. Returns (*, |B|, 3).
    Raises DegenerateBone when a bone's endpoints coincide in the pose.
    """
    pos = np.asarray(pos, dtype=np.float64)
    edges = bone_edges(skel)
    parents = np.array([p for p, _ in edges])
    children = np.array([c for _, c in edges])
    vec = pos[..., children, :] - pos[..., parents, :]
    norms = np.linalg.norm(vec, axis=-1)
    if np.any(norms < MIN_BONE_LENGTH):
        bad = int(np.argwhere(norms < MIN_BONE_LENGTH)[0][-1])
        raise DegenerateBone(f"joint {children[bad]} coincides with its parent")
    return vec / norms[..., None]


@dataclass(frozen=True)
class AngularMatrix:
    """Pairwise bone-direction cosines over the valid edge set."""

    a: np.ndarray  # (|B|, |B|), symmetric, unit diagonal
    bone_pairs: tuple  # ordered (parent, child) edges


def angular_matrix(dirs, bone_pairs=()):
    """Cosine similarity between every pair of unit bone directions."""
    dirs = np.asarray(dirs, dtype=np.float64)
    a = dirs @ np.swapaxes(dirs, -1, -2)
    a = np.clip((a + np.swapaxes(a, -1, -2)) / 2.0, -1.0, 1.0)
    idx = np.arange(a.shape[-1])
    a[..., idx, idx] = 1.0
    return AngularMatrix(a, tuple(bone_pairs))


def skeleton_loss(pred_pos, gt_pos, skel):
    """
    Mean squared angular-matrix mismatch over all bone pairs.

    pred_pos, gt_pos : (*, J, 3) joint positions from the same skeleton.
    Returns LossGrad with gradient with respect to pred_pos. Invariant to
    any rigid transform applied to both inputs, and to translations of the
    prediction alone.
    """
    pred_pos = np.asarray(pred_pos, dtype=np.float64)
    gt_pos = np.asarray(gt_pos, dtype=np.float64)
    if pred_pos.shape != gt_pos.shape:
        raise ShapeMismatch(f"{pred_pos.shape} vs {gt_pos.shape}")
    if pred_pos.shape[-2] != skel.n_joints:
        raise ShapeMismatch(f"positions have {pred_pos.shape[-2]} joints, skeleton {skel.n_joints}")

    edges = bone_edges(skel)
    parents = np.array([p for p, _ in edges])
    children = np.array([c for _, c in edges])
    nb = len(edges)

    def directions(pos):
        vec = pos[..., children, :] - pos[..., parents, :]
        norms = np.linalg.norm(vec, axis=-1)
        if np.any(norms < MIN_BONE_LENGTH):
            raise DegenerateBone("bone endpoints coincide")
        return vec, norms

    vec, norms = directions(pred_pos)
    d = vec / norms[..., None]
    vec_gt, norms_gt = directions(gt_pos)
    d_gt = vec_gt / norms_gt[..., None]

    A = d @ np.swapaxes(d, -1, -2)
    A_gt = d_gt @ np.swapaxes(d_gt, -1, -2)
    diff = A - A_gt
    n_frames = max(1, int(np.prod(pred_pos.shape[:-2])))
    n_terms = n_frames * nb * nb
    value = float(np.sum(diff * diff)) / n_terms

    # dL/dA is symmetric, so dL/dd = 2 (dL/dA) d.
    grad_A = (2.0 / n_terms) * diff
    grad_d = 2.0 * grad_A @ d
    # through the normalization d = vec/|vec|
    grad_vec = (grad_d - d * np.sum(d * grad_d, axis=-1, keepdims=True)) / norms[..., None]
    grad_pos = np.zeros_like(pred_pos)
    np.add.at(grad_pos, (..., children, slice(None)), grad_vec)
    np.subtract.at(grad_pos, (..., parents, slice(None)), grad_vec)
    return LossGrad(value, grad_pos)


def position_loss(pred_pos, gt_pos):
    """
    Mean (over joints and frames) squared joint-position error.

    Returns LossGrad with gradient with respect to pred_pos.
    """
    pred_pos = np.asarray(pred_pos, dtype=np.float64)
    gt_pos = np.asarray(gt_pos, dtype=np.float64)
    if pred_pos.shape != gt_pos.shape:
        raise ShapeMismatch(f"{pred_pos.shape} vs {gt_pos.shape}")
    diff = pred_pos - gt_pos
    n_terms = max(1, int(np.prod(pred_pos.shape[:-1])))
    value = float(np.sum(diff * diff)) / n_terms
    return LossGrad(value, (2.0 / n_terms) * diff)


# Motion-channel wrappers: same losses, gradients in (J*6 + 3) layout.

def motion_joint_loss(pred, gt, anchors, n_joints):
    pred_sixd, _ = motion.split_channels(pred, n_joints)
    gt_sixd, _ = motion.split_channels(gt, n_joints)
    lg = joint_loss(pred_sixd, gt_sixd, anchors)
    root_grad = np.zeros(pred_sixd.shape[:-2] + (3,))
    return LossGrad(lg.value, motion.merge_channels(lg.grad, root_grad))


def motion_position_loss(skel, pred, gt):
    pred_pos = motion.positions(skel, pred)
    gt_pos = motion.positions(skel, gt)
    lg = position_loss(pred_pos, gt_pos)
    return LossGrad(lg.value, motion.positions_backward(skel, pred, lg.grad))


def motion_skeleton_loss(skel, pred, gt):
    pred_pos = motion.positions(skel, pred)
    gt_pos = motion.positions(skel, gt)
    lg = skeleton_loss(pred_pos, gt_pos, skel)
    return LossGrad(lg.value, motion.positions_backward(skel, pred, lg.grad))


def fd_check(loss_fn, x, h=1e-5, max_coords=None, rng=None):
    """
    Max relative error between a loss's analytic gradient and central
    finite differences.

    loss_fn maps an array to a LossGrad (or (value, grad) pair). If
    ``max_coords`` is given, a random subset of at least 64 coordinates is
    checked; otherwise every coordinate is.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    x = np.asarray(x, dtype=np.float64)
    out = loss_fn(x)
    analytic = np.asarray(out.grad if isinstance(out, LossGrad) else out[1])
    flat = x.reshape(-1)
    coords = np.arange(flat.size)
    if max_coords is not None and flat.size > max_coords:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(flat.size, size=max(64, max_coords), replace=False)

    def value_at(v):
        out = loss_fn(v.reshape(x.shape))
        return out.value if isinstance(out, LossGrad) else out[0]

    worst = 0.0
    a_flat = analytic.reshape(-1)
    for i in coords:
        bumped = flat.copy()
        bumped[i] += h
        up = value_at(bumped)
        bumped[i] -= 2 * h
        down = value_at(bumped)
        fd = (up - down) / (2 * h)
        err = abs(a_flat[i] - fd) / max(1.0, abs(a_flat[i]), abs(fd))
        worst = max(worst, err)
    return worst
