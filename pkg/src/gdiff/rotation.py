"""SO(3) rotation representations and conversions.

All functions are batch-vectorized NumPy in float64: leading dimensions are
batch dimensions, rotations are (*, 3, 3) matrices, 6D vectors are (*, 6).

The 6D representation stores two raw 3-vectors that orthonormalize (via
Gram-Schmidt) into the first two *columns* of the rotation matrix; the third
column is their cross product. Extracting a 6D vector from a matrix takes the
first two columns back.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInput, InvalidRotation, UnsupportedOrder

# Norms below this are treated as vanishing when orthonormalizing.
DEGENERACY_EPS = 1e-8

BVH_ORDERS = ("XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX")


def rot6d_to_matrix(r):
    """
    Convert 6D rotation vectors to rotation matrices via Gram-Schmidt.

    Parameters
    ----------
    r : array_like, shape (*, 6)
        Raw 6D vectors [a1 | a2].

    Returns
    -------
    R : ndarray, shape (*, 3, 3)
        Proper rotation matrices; a1 maps to column 0 after normalization.

    Raises
    ------
    DegenerateInput
        If either raw vector has vanishing norm after orthogonalization
        (zero input or parallel vectors).
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 6:
        raise DegenerateInput(f"expected last dim 6, got {r.shape}")
    a1 = r[..., :3]
    a2 = r[..., 3:]

    n1 = np.linalg.norm(a1, axis=-1)
    if np.any(n1 < DEGENERACY_EPS):
        raise DegenerateInput("first 6D vector has vanishing norm")
    b1 = a1 / n1[..., None]

    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1)
    if np.any(n2 < DEGENERACY_EPS):
        raise DegenerateInput("6D vectors parallel or second vector vanishing")
    b2 = u2 / n2[..., None]

    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def rot6d_to_matrix_backward(r, grad_matrix):
    """
    Vector-Jacobian product of :func:`rot6d_to_matrix`.

    Given dL/dR, returns dL/dr for the raw 6D input. Used by the loss
    modules to chain position/rotation gradients back to motion channels.

    Parameters
    ----------
    r : array_like, shape (*, 6)
        The 6D input at which the conversion was evaluated.
    grad_matrix : array_like, shape (*, 3, 3)
        Upstream gradient with respect to the rotation matrix.

    Returns
    -------
    grad_r : ndarray, shape (*, 6)
    """
    r = np.asarray(r, dtype=np.float64)
    g = np.asarray(grad_matrix, dtype=np.float64)
    a1 = r[..., :3]
    a2 = r[..., 3:]

    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    b1 = a1 / n1
    d = np.sum(b1 * a2, axis=-1, keepdims=True)
    u2 = a2 - d * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    b2 = u2 / n2

    g1 = g[..., :, 0]
    g2 = g[..., :, 1]
    g3 = g[..., :, 2]

    # b3 = b1 x b2 routes g3 into both unit vectors.
    db1 = g1 + np.cross(b2, g3)
    db2 = g2 + np.cross(g3, b1)

    # b2 = u2 / |u2|
    du2 = (db2 - b2 * np.sum(b2 * db2, axis=-1, keepdims=True)) / n2
    # u2 = a2 - (b1.a2) b1
    h_dot_b1 = np.sum(du2 * b1, axis=-1, keepdims=True)
    da2 = du2 - b1 * h_dot_b1
    db1 = db1 - a2 * h_dot_b1 - d * du2

    # b1 = a1 / |a1|
    da1 = (db1 - b1 * np.sum(b1 * db1, axis=-1, keepdims=True)) / n1
    return np.concatenate([da1, da2], axis=-1)


def matrix_to_rot6d(R, tol=1e-6):
    """
    Extract the 6D representation (first two columns) of rotation matrices.

    Raises InvalidRotation if the input violates orthonormality or the
    determinant beyond ``tol``.
    """
    R = np.asarray(R, dtype=np.float64)
    check_rotation(R, tol=tol)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def check_rotation(R, tol=1e-6):
    """Raise InvalidRotation unless R is orthonormal with det = +1 within tol."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise InvalidRotation(f"expected (*, 3, 3), got {R.shape}")
    eye = np.eye(3)
    ortho_err = np.max(np.abs(np.swapaxes(R, -1, -2) @ R - eye))
    det_err = np.max(np.abs(np.linalg.det(R) - 1.0))
    if ortho_err > tol or det_err > tol:
        raise InvalidRotation(
            f"not a rotation: orthonormality error {ortho_err:.3e}, "
            f"determinant error {det_err:.3e} (tol {tol:.1e})"
        )


def is_rotation(R, tol=1e-9):
    """True when R satisfies the rotation invariants within tol."""
    try:
        check_rotation(R, tol=tol)
    except InvalidRotation:
        return False
    return True


def compose(a, b):
    """Compose two rotations: result applies b first, then a (matrix product a @ b)."""
    return np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)


def apply(R, v):
    """Rotate 3-vectors v by R (norm-preserving)."""
    R = np.asarray(R, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return np.einsum("...ij,...j->...i", R, v)


def geodesic_distance(a, b):
    """
    Angle in radians of the relative rotation between a and b, in [0, pi].

    Uses the trace formula cos(theta) = (tr(a^T b) - 1) / 2, clipped for
    numerical safety.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    rel = np.einsum("...ji,...jk->...ik", a, b)
    tr = np.trace(rel, axis1=-2, axis2=-1)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


def euler_to_matrix(angles, order):
    """
    Convert Euler angles (radians) to rotation matrices.

    ``order`` is one of the six BVH channel orderings ('XYZ', 'ZXY', ...);
    rotation is intrinsic with pre-multiplication: R = R_first @ R_second
    @ R_third, matching BVH channel semantics.
    """
    order = str(order).upper()
    if order not in BVH_ORDERS:
        raise UnsupportedOrder(f"axis order {order!r} not one of {BVH_ORDERS}")
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape[-1] != 3:
        raise UnsupportedOrder(f"expected 3 angles, got shape {angles.shape}")
    R = axis_rotation(order[0], angles[..., 0])
    R = R @ axis_rotation(order[1], angles[..., 1])
    R = R @ axis_rotation(order[2], angles[..., 2])
    return R


def axis_rotation(axis, angle):
    """Single-axis rotation matrices for axis in {'X','Y','Z'} (batched angle)."""
    angle = np.asarray(angle, dtype=np.float64)
    c = np.cos(angle)
    s = np.sin(angle)
    one = np.ones_like(c)
    zero = np.zeros_like(c)
    if axis == "X":
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis == "Y":
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    elif axis == "Z":
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    else:
        raise UnsupportedOrder(f"unknown axis {axis!r}")
    return np.stack(
        [np.stack(row, axis=-1) for row in rows],
        axis=-2,
    )


def random_rotation(rng, shape=()):
    """Uniformly-ish random rotation matrices from normalized random 6D inputs."""
    r = rng.standard_normal(tuple(shape) + (6,))
    return rot6d_to_matrix(r)


def random_rot6d(rng, shape=()):
    """Random valid 6D vectors (the raw form of random_rotation)."""
    return matrix_to_rot6d(random_rotation(rng, shape))
