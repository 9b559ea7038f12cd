"""Motion channel layout helpers.

A motion sequence is a float64 array of shape (T, J*6 + 3): per frame, J
global joint rotations in 6D format followed by the 3 root-translation
channels. These helpers keep the layout in one place.
"""

from __future__ import annotations

import numpy as np

from . import rotation, skeleton as sk
from .errors import ShapeMismatch


def n_channels(n_joints):
    return n_joints * 6 + 3


def joint_count(channels):
    if (channels - 3) % 6 != 0 or channels < 9:
        raise ShapeMismatch(f"{channels} channels is not J*6 + 3")
    return (channels - 3) // 6


def split_channels(x, n_joints):
    """(..., J*6+3) -> (sixd (..., J, 6), root (..., 3)). Views when possible."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != n_channels(n_joints):
        raise ShapeMismatch(
            f"expected {n_channels(n_joints)} channels for J={n_joints}, got {x.shape[-1]}"
        )
    sixd = x[..., : n_joints * 6].reshape(x.shape[:-1] + (n_joints, 6))
    root = x[..., n_joints * 6 :]
    return sixd, root


def merge_channels(sixd, root):
    """Inverse of split_channels."""
    sixd = np.asarray(sixd, dtype=np.float64)
    root = np.asarray(root, dtype=np.float64)
    flat = sixd.reshape(sixd.shape[:-2] + (sixd.shape[-2] * 6,))
    return np.concatenate([flat, root], axis=-1)


def rotmats(x, n_joints):
    """Global rotation matrices (..., J, 3, 3) from motion channels."""
    sixd, _ = split_channels(x, n_joints)
    return rotation.rot6d_to_matrix(sixd)


def positions(skel, x):
    """World joint positions (..., J, 3) from motion channels via global FK."""
    sixd, root = split_channels(x, skel.n_joints)
    return sk.global_positions(skel, rotation.rot6d_to_matrix(sixd), root)


def positions_backward(skel, x, grad_pos):
    """Chain a positions gradient back to motion channels.

    Returns an array shaped like x: d(loss)/d(channels) given
    d(loss)/d(positions), through global FK and the 6D orthonormalization.
    """
    sixd, _ = split_channels(x, skel.n_joints)
    grad_rot, grad_root = sk.global_positions_backward(skel, grad_pos)
    grad_sixd = rotation.rot6d_to_matrix_backward(sixd, grad_rot)
    return merge_channels(grad_sixd, grad_root)
