import numpy as np
import pytest

from conftest import random_motion, random_tree_skeleton
from gdiff import constraints, motion, rotation, skeleton as sk
from gdiff.errors import DegenerateBone, NonPositiveScale, ShapeMismatch


def test_default_anchors():
    a = constraints.default_anchors(1.0)
    assert a.n_points == 6
    np.testing.assert_allclose(sorted(np.linalg.norm(a.points, axis=1)), np.ones(6))
    assert np.linalg.matrix_rank(a.points) == 3
    small = constraints.default_anchors(0.1)
    np.testing.assert_allclose(np.linalg.norm(small.points, axis=1), np.full(6, 0.1))


def test_anchor_scale_must_be_positive():
    with pytest.raises(NonPositiveScale):
        constraints.default_anchors(0.0)
    with pytest.raises(NonPositiveScale):
        constraints.default_anchors(-1.0)


def test_anchor_rank_requirement():
    with pytest.raises(ValueError):
        constraints.AnchorSet(np.array([[1.0, 0, 0], [0, 1, 0], [1, 1, 0]]))  # coplanar


def test_joint_loss_zero_at_gt(rng):
    sixd = rotation.random_rot6d(rng, (5,))
    lg = constraints.joint_loss(sixd, sixd, constraints.default_anchors(1.0))
    assert lg.value == 0.0
    np.testing.assert_allclose(lg.grad, 0.0)


def test_joint_loss_worked_example():
    pred = rotation.matrix_to_rot6d(rotation.axis_rotation("Z", np.pi))[None]
    gt = rotation.matrix_to_rot6d(np.eye(3))[None]
    lg = constraints.joint_loss(pred, gt, constraints.default_anchors(1.0))
    # four in-plane unit anchors flip (distance^2 = 4 each), two stay put
    assert abs(lg.value - 8.0 / 3.0) < 1e-12


def test_joint_loss_gradient_fd(rng):
    gt = rotation.random_rot6d(rng, (3,))
    pred = rng.standard_normal((3, 6))
    err = constraints.fd_check(
        lambda x: constraints.joint_loss(x, gt, constraints.default_anchors(0.8)), pred)
    assert err < 1e-5


def test_joint_loss_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        constraints.joint_loss(rng.standard_normal((2, 6)), rng.standard_normal((3, 6)),
                               constraints.default_anchors(1.0))


def test_joint_loss_uniqueness(rng):
    # zero loss iff rotations match (rank-3 anchors); nonzero otherwise
    anchors = constraints.default_anchors(1.0)
    gt6 = rotation.random_rot6d(rng, (8,))
    gt_mats = rotation.rot6d_to_matrix(gt6)
    for _ in range(20):
        pred6 = rotation.random_rot6d(rng, (8,))
        lg = constraints.joint_loss(pred6, gt6, anchors)
        dist = rotation.geodesic_distance(rotation.rot6d_to_matrix(pred6), gt_mats)
        if lg.value < 1e-14:
            assert np.all(dist < 1e-6)
        if np.any(dist > 1e-3):
            assert lg.value > 0


def test_joint_loss_gradient_descent_recovers_rotation(rng):
    # fine-grained orientation supervision: GD pulls a random init onto GT
    anchors = constraints.default_anchors(1.0)
    gt = rotation.random_rot6d(rng, (5,))
    r = rng.standard_normal((5, 6))
    n = 5  # per-problem learning rate 0.05 via the batch-mean compensation
    for _ in range(2000):
        lg = constraints.joint_loss(r, gt, anchors)
        if lg.value < 1e-16:
            break
        r = r - 0.05 * n * lg.grad
    dist = rotation.geodesic_distance(rotation.rot6d_to_matrix(r), rotation.rot6d_to_matrix(gt))
    assert np.all(dist < 1e-3)


def test_bone_directions_rest_chain():
    skel = sk.chain_skeleton(3)
    dirs = constraints.bone_directions(skel, skel.rest_positions)
    np.testing.assert_allclose(dirs, np.tile([0, 1, 0], (3, 1)))


def test_bone_directions_normalization():
    skel = sk.Skeleton(("a", "b"), np.array([-1, 0]), np.array([[0.0, 0, 0], [1.0, 0, 0]]))
    dirs = constraints.bone_directions(skel, np.array([[0.0, 0, 0], [3.0, 4.0, 0]]))
    np.testing.assert_allclose(dirs, [[0.6, 0.8, 0.0]])


def test_bone_directions_unit_norm(rng):
    skel = random_tree_skeleton(rng, 12)
    pos = motion.positions(skel, random_motion(rng, skel, 4))
    dirs = constraints.bone_directions(skel, pos)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-12)


def test_bone_directions_degenerate():
    skel = sk.chain_skeleton(2)
    pos = skel.rest_positions.copy()
    pos[2] = pos[1]
    with pytest.raises(DegenerateBone):
        constraints.bone_directions(skel, pos)


def test_angular_matrix_values():
    dirs = np.array([[0.0, 1, 0], [1.0, 0, 0], [0.0, -1, 0]])
    am = constraints.angular_matrix(dirs)
    assert am.a[0, 1] == 0.0  # orthogonal bones
    np.testing.assert_allclose(np.diag(am.a), 1.0)
    assert am.a[0, 2] == -1.0  # antiparallel
    np.testing.assert_allclose(am.a, am.a.T)
    assert np.all(am.a >= -1.0) and np.all(am.a <= 1.0)


def test_skeleton_loss_zero_and_invariances(rng):
    skel = random_tree_skeleton(rng, 9)
    pos = motion.positions(skel, random_motion(rng, skel, 1))[0]
    assert constraints.skeleton_loss(pos, pos, skel).value == 0.0

    gt = motion.positions(skel, random_motion(rng, skel, 1))[0]
    base = constraints.skeleton_loss(pos, gt, skel).value
    R = rotation.random_rotation(rng)
    rigid = constraints.skeleton_loss(pos @ R.T + 1.5, gt @ R.T - 0.25, skel).value
    assert abs(rigid - base) < 1e-10  # rigid transform of both sides
    shifted = constraints.skeleton_loss(pos + np.array([3.0, -1.0, 2.0]), gt, skel).value
    assert abs(shifted - base) < 1e-12  # translation of predictions alone


def test_skeleton_loss_gradient_fd(rng):
    skel = random_tree_skeleton(rng, 6)
    pred = motion.positions(skel, random_motion(rng, skel, 2))
    gt = motion.positions(skel, random_motion(rng, skel, 2))
    err = constraints.fd_check(lambda p: constraints.skeleton_loss(p, gt, skel), pred)
    assert err < 1e-5


def test_position_loss():
    pred = np.zeros((4, 3))
    gt = np.zeros((4, 3))
    assert constraints.position_loss(pred, gt).value == 0.0
    pred[1] = [1.0, 0, 0]
    # mean over joints of squared distance: 1/K
    assert abs(constraints.position_loss(pred, gt).value - 1.0 / 4.0) < 1e-15
    with pytest.raises(ShapeMismatch):
        constraints.position_loss(np.zeros((3, 3)), np.zeros((4, 3)))


def test_position_loss_gradient_fd(rng):
    pred = rng.standard_normal((5, 3))
    gt = rng.standard_normal((5, 3))
    err = constraints.fd_check(lambda p: constraints.position_loss(p, gt), pred)
    assert err < 1e-5


def test_all_losses_nonnegative(rng):
    skel = random_tree_skeleton(rng, 7)
    for _ in range(5):
        a = random_motion(rng, skel, 3)
        b = random_motion(rng, skel, 3)
        assert constraints.motion_position_loss(skel, a, b).value >= 0
        assert constraints.motion_skeleton_loss(skel, a, b).value >= 0
        assert constraints.motion_joint_loss(a, b, constraints.default_anchors(0.5),
                                             skel.n_joints).value >= 0


def test_motion_wrappers_grad_layout(rng):
    skel = random_tree_skeleton(rng, 5)
    a = random_motion(rng, skel, 3)
    b = random_motion(rng, skel, 3)
    for lg in (constraints.motion_position_loss(skel, a, b),
               constraints.motion_skeleton_loss(skel, a, b),
               constraints.motion_joint_loss(a, b, constraints.default_anchors(0.5), 5)):
        assert lg.grad.shape == a.shape
        assert np.all(np.isfinite(lg.grad))


def test_degenerate_rest_bone_dropped(rng):
    skel = sk.Skeleton(("a", "b", "c"), np.array([-1, 0, 1]),
                       np.array([[0.0, 0, 0], [0.0, 0, 0], [0, 1.0, 0]]))
    with pytest.warns(UserWarning):
        edges = constraints.bone_edges(skel)
    assert edges == [(1, 2)]


def test_fd_check_step_validation(rng):
    with pytest.raises(ValueError):
        constraints.fd_check(lambda p: constraints.position_loss(p, p), np.zeros((2, 3)), h=1e-2)
