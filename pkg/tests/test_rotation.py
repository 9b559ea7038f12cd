import numpy as np
import pytest

from gdiff import rotation
from gdiff.errors import DegenerateInput, InvalidRotation, UnsupportedOrder


def gram_schmidt_oracle(r):
    """Explicit loop Gram-Schmidt, independent of the vectorized path."""
    a1, a2 = np.array(r[:3], float), np.array(r[3:], float)
    b1 = a1 / np.linalg.norm(a1)
    u2 = a2 - np.dot(b1, a2) * b1
    b2 = u2 / np.linalg.norm(u2)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def test_identity_cases():
    np.testing.assert_allclose(rotation.rot6d_to_matrix([1, 0, 0, 0, 1, 0]), np.eye(3))
    # Gram-Schmidt ignores positive scale
    np.testing.assert_allclose(rotation.rot6d_to_matrix([2, 0, 0, 0, 3, 0]), np.eye(3))


def test_random_6d_orthonormal_against_oracle(rng):
    r = rng.standard_normal((500, 6))
    R = rotation.rot6d_to_matrix(r)
    eye = np.eye(3)
    assert np.max(np.abs(np.swapaxes(R, -1, -2) @ R - eye)) < 1e-9
    assert np.max(np.abs(np.linalg.det(R) - 1.0)) < 1e-9
    for i in range(0, 500, 50):
        np.testing.assert_allclose(R[i], gram_schmidt_oracle(r[i]), atol=1e-12)


def test_scale_invariance(rng):
    r = rng.standard_normal((64, 6))
    scaled = r.copy()
    scaled[:, :3] *= rng.uniform(0.1, 10.0, (64, 1))
    scaled[:, 3:] *= rng.uniform(0.1, 10.0, (64, 1))
    np.testing.assert_allclose(rotation.rot6d_to_matrix(r),
                               rotation.rot6d_to_matrix(scaled), atol=1e-12)


def test_degenerate_inputs():
    with pytest.raises(DegenerateInput):
        rotation.rot6d_to_matrix([0, 0, 0, 0, 1, 0])
    with pytest.raises(DegenerateInput):
        rotation.rot6d_to_matrix([1, 0, 0, 2, 0, 0])  # parallel
    with pytest.raises(DegenerateInput):
        rotation.rot6d_to_matrix([1e-9, 0, 0, 0, 1, 0])


def test_matrix_to_rot6d_examples():
    np.testing.assert_allclose(rotation.matrix_to_rot6d(np.eye(3)), [1, 0, 0, 0, 1, 0])
    rz = rotation.axis_rotation("Z", np.pi / 2)
    np.testing.assert_allclose(rotation.matrix_to_rot6d(rz), [0, 1, 0, -1, 0, 0], atol=1e-15)


def test_matrix_roundtrip(rng):
    R = rotation.random_rotation(rng, (1000,))
    back = rotation.rot6d_to_matrix(rotation.matrix_to_rot6d(R))
    assert np.max(np.abs(back - R)) < 1e-9


def test_matrix_to_rot6d_rejects_bad_input():
    with pytest.raises(InvalidRotation):
        rotation.matrix_to_rot6d(np.eye(3) * 1.001)
    with pytest.raises(InvalidRotation):
        rotation.matrix_to_rot6d(np.diag([1.0, 1.0, -1.0]))  # det -1


def test_idempotent_on_induced_rotation(rng):
    r = rng.standard_normal((100, 6))
    r1 = rotation.matrix_to_rot6d(rotation.rot6d_to_matrix(r))
    r2 = rotation.matrix_to_rot6d(rotation.rot6d_to_matrix(r1))
    np.testing.assert_allclose(r1, r2, atol=1e-12)


def test_compose():
    rz = rotation.axis_rotation("Z", np.pi / 2)
    np.testing.assert_allclose(rotation.compose(np.eye(3), rz), rz)
    np.testing.assert_allclose(rotation.compose(rz, rz),
                               rotation.axis_rotation("Z", np.pi), atol=1e-15)
    np.testing.assert_allclose(rotation.compose(rz, rz.T), np.eye(3), atol=1e-15)


def test_apply():
    np.testing.assert_allclose(rotation.apply(np.eye(3), [1, 2, 3]), [1, 2, 3])
    rz = rotation.axis_rotation("Z", np.pi / 2)
    np.testing.assert_allclose(rotation.apply(rz, [0, 1, 0]), [-1, 0, 0], atol=1e-15)


def test_apply_preserves_norm(rng):
    R = rotation.random_rotation(rng, (200,))
    v = rng.standard_normal((200, 3))
    out = rotation.apply(R, v)
    np.testing.assert_allclose(np.linalg.norm(out, axis=-1),
                               np.linalg.norm(v, axis=-1), atol=1e-9)


def test_geodesic_distance():
    rz = rotation.axis_rotation("Z", np.pi / 2)
    assert rotation.geodesic_distance(rz, rz) == 0.0
    assert abs(rotation.geodesic_distance(np.eye(3), rz) - np.pi / 2) < 1e-12


def test_geodesic_symmetric_and_bounded(rng):
    a = rotation.random_rotation(rng, (100,))
    b = rotation.random_rotation(rng, (100,))
    dab = rotation.geodesic_distance(a, b)
    dba = rotation.geodesic_distance(b, a)
    np.testing.assert_allclose(dab, dba, atol=1e-9)
    assert np.all(dab >= 0) and np.all(dab <= np.pi)


def test_geodesic_triangle_inequality(rng):
    a = rotation.random_rotation(rng, (200,))
    b = rotation.random_rotation(rng, (200,))
    c = rotation.random_rotation(rng, (200,))
    lhs = rotation.geodesic_distance(a, c)
    rhs = rotation.geodesic_distance(a, b) + rotation.geodesic_distance(b, c)
    assert np.all(lhs <= rhs + 1e-8)


def test_euler_identity_and_single_axis():
    for order in rotation.BVH_ORDERS:
        np.testing.assert_allclose(rotation.euler_to_matrix([0, 0, 0], order), np.eye(3))
    # pi/2 about Z only, ZXY order
    np.testing.assert_allclose(rotation.euler_to_matrix([np.pi / 2, 0, 0], "ZXY"),
                               rotation.axis_rotation("Z", np.pi / 2), atol=1e-15)


def test_euler_matches_composed_single_axis(rng):
    for order in rotation.BVH_ORDERS:
        angles = rng.uniform(-np.pi, np.pi, (20, 3))
        R = rotation.euler_to_matrix(angles, order)
        for i in range(20):
            expected = np.eye(3)
            for axis, angle in zip(order, angles[i]):
                expected = rotation.compose(expected, rotation.axis_rotation(axis, angle))
            np.testing.assert_allclose(R[i], expected, atol=1e-12)


def test_euler_matches_scipy(rng):
    scipy_rot = pytest.importorskip("scipy.spatial.transform").Rotation
    for order in rotation.BVH_ORDERS:
        angles = rng.uniform(-np.pi, np.pi, (10, 3))
        ours = rotation.euler_to_matrix(angles, order)
        ref = scipy_rot.from_euler(order, angles).as_matrix()
        np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_unsupported_order():
    with pytest.raises(UnsupportedOrder):
        rotation.euler_to_matrix([0.1, 0.2, 0.3], "XXY")
    with pytest.raises(UnsupportedOrder):
        rotation.euler_to_matrix([0.1, 0.2, 0.3], "ZYZ")


def test_gram_schmidt_backward_fd(rng):
    r = rng.standard_normal((8, 6))
    g = rng.standard_normal((8, 3, 3))
    analytic = rotation.rot6d_to_matrix_backward(r, g)
    h = 1e-6
    for i in range(8):
        for j in range(6):
            up, dn = r.copy(), r.copy()
            up[i, j] += h
            dn[i, j] -= h
            fd = np.sum((rotation.rot6d_to_matrix(up) - rotation.rot6d_to_matrix(dn)) * g) / (2 * h)
            assert abs(fd - analytic[i, j]) / max(1.0, abs(fd)) < 1e-7
