"""Skeleton data model and forward kinematics.

Two FK formulations coexist:

* local: global orientations recovered by composing local rotations down the
  tree, positions accumulated edge by edge.
* global: positions written as the path sum from the root, each edge rotated
  by the parent joint's *global* rotation directly, so no rotation products
  appear.

Both yield identical positions when the global rotations are the chain
products of the locals; the error-accumulation experiment quantifies how the
two formulations respond to a root perturbation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rotation
from .errors import InterpretationMismatch, InvalidRotation

LOCAL = "local"
GLOBAL = "global"


@dataclass(frozen=True)
class Skeleton:
    """Joint tree with rest-pose offsets (meters). Parents precede children."""

    names: tuple
    parents: np.ndarray  # (J,) int, root is -1
    offsets: np.ndarray  # (J, 3) offset from parent; root offset = rest position
    rest_positions: np.ndarray = field(init=False)  # (J, 3) accumulated from root

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        J = len(self.names)
        if J < 1:
            raise ValueError("skeleton needs at least one joint")
        if parents.shape != (J,) or offsets.shape != (J, 3):
            raise ValueError(f"inconsistent shapes for {J} joints")
        if not np.all(np.isfinite(offsets)):
            raise ValueError("offsets must be finite")
        roots = np.flatnonzero(parents < 0)
        if roots.tolist() != [0]:
            raise ValueError("exactly one root required, at index 0")
        if np.any(parents[1:] >= np.arange(1, J)):
            raise ValueError("parents must precede children (topological order)")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)
        rest = offsets.copy()
        for k in range(1, J):
            rest[k] += rest[parents[k]]
        rest.setflags(write=False)
        parents.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "rest_positions", rest)

    @property
    def n_joints(self):
        return len(self.names)

    @property
    def edges(self):
        """(parent, child) pairs for every non-root joint, child-ordered."""
        return [(int(self.parents[k]), k) for k in range(1, self.n_joints)]

    def children(self, k):
        return np.flatnonzero(self.parents == k).tolist()


@dataclass(frozen=True)
class Pose:
    """Per-joint rotations plus root translation, flagged LOCAL or GLOBAL."""

    rotations: np.ndarray  # (J, 3, 3)
    root_translation: np.ndarray  # (3,)
    frame: str

    def __post_init__(self):
        rot = np.asarray(self.rotations, dtype=np.float64)
        trans = np.asarray(self.root_translation, dtype=np.float64)
        if rot.ndim != 3 or rot.shape[-2:] != (3, 3):
            raise InvalidRotation(f"expected (J, 3, 3) rotations, got {rot.shape}")
        if trans.shape != (3,):
            raise ValueError(f"expected (3,) root translation, got {trans.shape}")
        if self.frame not in (LOCAL, GLOBAL):
            raise InterpretationMismatch(f"unknown frame {self.frame!r}")
        rotation.check_rotation(rot, tol=1e-6)
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotations", rot)
        object.__setattr__(self, "root_translation", trans)

    @property
    def n_joints(self):
        return self.rotations.shape[0]


def _require(pose, skel, frame):
    if pose.frame != frame:
        raise InterpretationMismatch(f"pose is {pose.frame!r}, expected {frame!r}")
    if pose.n_joints != skel.n_joints:
        raise InterpretationMismatch(
            f"pose has {pose.n_joints} joints, skeleton {skel.n_joints}"
        )


# Array-level kernels, batched over arbitrary leading dims. Poses wrap these.

def chain_globals(skel, local_rots):
    """Compose local rotations down the tree: (*, J, 3, 3) -> (*, J, 3, 3)."""
    out = np.empty_like(np.asarray(local_rots, dtype=np.float64))
    out[..., 0, :, :] = local_rots[..., 0, :, :]
    for k in range(1, skel.n_joints):
        p = skel.parents[k]
        out[..., k, :, :] = out[..., p, :, :] @ local_rots[..., k, :, :]
    return out


def unchain_globals(skel, global_rots):
    """Invert chain_globals: local_k = global_parent^T @ global_k."""
    g = np.asarray(global_rots, dtype=np.float64)
    out = np.empty_like(g)
    out[..., 0, :, :] = g[..., 0, :, :]
    for k in range(1, skel.n_joints):
        p = skel.parents[k]
        out[..., k, :, :] = np.swapaxes(g[..., p, :, :], -1, -2) @ g[..., k, :, :]
    return out


def global_positions(skel, global_rots, root_translation):
    """
    Path-sum positions from global rotations.

    q_k = q_parent + R_parent^global (t_k - t_parent) with t the rest-pose
    world positions; the root sits at ``root_translation``. Batched over
    leading dims of both arguments.
    """
    g = np.asarray(global_rots, dtype=np.float64)
    root = np.asarray(root_translation, dtype=np.float64)
    rest = skel.rest_positions
    out = np.empty(g.shape[:-3] + (skel.n_joints, 3))
    out[..., 0, :] = root
    for k in range(1, skel.n_joints):
        p = skel.parents[k]
        off = rest[k] - rest[p]
        out[..., k, :] = out[..., p, :] + g[..., p, :, :] @ off
    return out


def global_positions_backward(skel, grad_positions):
    """
    Vector-Jacobian product of :func:`global_positions`.

    Returns (grad_global_rots, grad_root_translation). An edge's offset term
    R_parent (t_child - t_parent) appears in the position of every joint in
    the child's subtree, so gradients accumulate bottom-up.
    """
    gp = np.asarray(grad_positions, dtype=np.float64)
    J = skel.n_joints
    rest = skel.rest_positions
    subtree = gp.copy()
    grad_rot = np.zeros(gp.shape[:-2] + (J, 3, 3))
    for k in range(J - 1, 0, -1):
        p = skel.parents[k]
        off = rest[k] - rest[p]
        grad_rot[..., p, :, :] += subtree[..., k, :, None] * off[None, :]
        subtree[..., p, :] += subtree[..., k, :]
    return grad_rot, subtree[..., 0, :]


def fk_local(skel, pose):
    """
    Recursive FK from a LOCAL pose.

    Returns (global_rots (J,3,3), positions (J,3)).
    """
    _require(pose, skel, LOCAL)
    globals_ = chain_globals(skel, pose.rotations)
    pos = global_positions(skel, globals_, pose.root_translation)
    return globals_, pos


def fk_global(skel, pose):
    """Path-sum FK from a GLOBAL pose. Returns positions (J,3)."""
    _require(pose, skel, GLOBAL)
    return global_positions(skel, pose.rotations, pose.root_translation)


def locals_to_globals(skel, pose):
    _require(pose, skel, LOCAL)
    return Pose(chain_globals(skel, pose.rotations), pose.root_translation, GLOBAL)


def globals_to_locals(skel, pose):
    _require(pose, skel, GLOBAL)
    return Pose(unchain_globals(skel, pose.rotations), pose.root_translation, LOCAL)


def chain_skeleton(n_bones, bone=(0.0, 1.0, 0.0)):
    """Straight chain of ``n_bones`` unit bones; n_bones + 1 joints, root at origin."""
    J = n_bones + 1
    offsets = np.tile(np.asarray(bone, dtype=np.float64), (J, 1))
    offsets[0] = 0.0
    parents = np.arange(-1, n_bones)
    names = tuple(f"j{k}" for k in range(J))
    return Skeleton(names, parents, offsets)


def error_accumulation_experiment(depth, epsilon):
    """
    Tip displacement per depth when the root rotation is perturbed.

    Builds a straight chain of ``depth`` unit +Y bones and perturbs the root
    rotation by ``epsilon`` about Z in (a) the local representation, where the
    perturbation propagates to every descendant, and (b) the global
    representation, where only the first edge's term rotates.

    Returns a dict with keys 'depth', 'local', 'global': arrays of length
    ``depth`` giving each joint's displacement from rest.
    """
    if depth < 2:
        raise ValueError("depth must be >= 2")
    if not (0.0 <= epsilon < np.pi):
        raise ValueError("epsilon must lie in [0, pi)")
    skel = chain_skeleton(depth)
    J = skel.n_joints
    perturb = rotation.axis_rotation("Z", epsilon)
    rest = skel.rest_positions

    rots = np.tile(np.eye(3), (J, 1, 1))
    rots[0] = perturb
    _, pos_local = fk_local(skel, Pose(rots, np.zeros(3), LOCAL))
    pos_global = fk_global(skel, Pose(rots, np.zeros(3), GLOBAL))

    local_err = np.linalg.norm(pos_local - rest, axis=-1)[1:]
    global_err = np.linalg.norm(pos_global - rest, axis=-1)[1:]
    return {
        "depth": np.arange(1, depth + 1),
        "local": local_err,
        "global": global_err,
    }
