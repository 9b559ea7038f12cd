import numpy as np
import pytest

from conftest import random_local_pose, random_tree_skeleton
from gdiff import rotation, skeleton as sk
from gdiff.errors import InterpretationMismatch


def two_joint_chain():
    return sk.Skeleton(("a", "b"), np.array([-1, 0]), np.array([[0.0, 0, 0], [0, 1.0, 0]]))


def unrolled_fk_oracle(skel, pose):
    """Literal path-sum evaluation: product of ancestor locals per edge."""
    J = skel.n_joints
    rest = skel.rest_positions
    positions = np.zeros((J, 3))
    for k in range(J):
        q = np.array(pose.root_translation, float)
        # walk the root->k path, accumulating each edge rotated by the
        # product of locals strictly above the edge's parent
        path = []
        j = k
        while skel.parents[j] >= 0:
            path.append((skel.parents[j], j))
            j = skel.parents[j]
        for p, c in reversed(path):
            prod = np.eye(3)
            chain = []
            a = p
            while a >= 0:
                chain.append(a)
                a = skel.parents[a]
            for a in reversed(chain):
                prod = prod @ pose.rotations[a]
            q = q + prod @ (rest[c] - rest[p])
        positions[k] = q
    return positions


def test_rest_pose_chain():
    skel = two_joint_chain()
    pose = sk.Pose(np.tile(np.eye(3), (2, 1, 1)), np.zeros(3), sk.LOCAL)
    _, pos = sk.fk_local(skel, pose)
    np.testing.assert_allclose(pos, [[0, 0, 0], [0, 1, 0]])


def test_root_rotation_moves_child():
    skel = two_joint_chain()
    rots = np.tile(np.eye(3), (2, 1, 1))
    rots[0] = rotation.axis_rotation("Z", np.pi / 2)
    _, pos = sk.fk_local(skel, sk.Pose(rots, np.zeros(3), sk.LOCAL))
    np.testing.assert_allclose(pos[1], [-1, 0, 0], atol=1e-15)


def test_fk_local_matches_unrolled_oracle(rng):
    for _ in range(5):
        skel = random_tree_skeleton(rng, 10)
        pose = random_local_pose(rng, skel)
        _, pos = sk.fk_local(skel, pose)
        np.testing.assert_allclose(pos, unrolled_fk_oracle(skel, pose), atol=1e-12)


def test_fk_global_identity_gives_rest_offsets(rng):
    skel = random_tree_skeleton(rng, 12)
    pose = sk.Pose(np.tile(np.eye(3), (12, 1, 1)), np.array([1.0, 2.0, 3.0]), sk.GLOBAL)
    pos = sk.fk_global(skel, pose)
    np.testing.assert_allclose(pos, skel.rest_positions - skel.rest_positions[0] + [1, 2, 3],
                               atol=1e-12)


def test_fk_global_matches_fk_local(rng):
    for _ in range(10):
        skel = random_tree_skeleton(rng, int(rng.integers(2, 30)))
        pose = random_local_pose(rng, skel)
        _, pos_local = sk.fk_local(skel, pose)
        pos_global = sk.fk_global(skel, sk.locals_to_globals(skel, pose))
        assert np.max(np.abs(pos_global - pos_local)) < 1e-12


def test_single_joint():
    skel = sk.Skeleton(("root",), np.array([-1]), np.zeros((1, 3)))
    pose = sk.Pose(np.eye(3)[None], np.array([0.5, -0.25, 2.0]), sk.GLOBAL)
    np.testing.assert_allclose(sk.fk_global(skel, pose), [[0.5, -0.25, 2.0]])


def test_locals_to_globals_chain_of_quarter_turns():
    skel = sk.chain_skeleton(2)
    rz = rotation.axis_rotation("Z", np.pi / 2)
    rots = np.stack([rz, rz, np.eye(3)])
    out = sk.locals_to_globals(skel, sk.Pose(rots, np.zeros(3), sk.LOCAL))
    np.testing.assert_allclose(out.rotations[0], rz, atol=1e-15)
    np.testing.assert_allclose(out.rotations[1], rotation.axis_rotation("Z", np.pi), atol=1e-15)
    assert out.frame == sk.GLOBAL


def test_all_identity_roundtrip():
    skel = sk.chain_skeleton(3)
    rots = np.tile(np.eye(3), (4, 1, 1))
    pose = sk.Pose(rots, np.zeros(3), sk.LOCAL)
    out = sk.locals_to_globals(skel, pose)
    np.testing.assert_allclose(out.rotations, rots)


def test_local_global_roundtrip(rng):
    for _ in range(5):
        skel = random_tree_skeleton(rng, 16)
        pose = random_local_pose(rng, skel)
        back = sk.globals_to_locals(skel, sk.locals_to_globals(skel, pose))
        assert np.max(np.abs(back.rotations - pose.rotations)) < 1e-12
        globals_ = sk.locals_to_globals(skel, pose)
        back2 = sk.locals_to_globals(skel, sk.globals_to_locals(skel, globals_))
        assert np.max(np.abs(back2.rotations - globals_.rotations)) < 1e-12


def test_interpretation_mismatch():
    skel = two_joint_chain()
    pose = sk.Pose(np.tile(np.eye(3), (2, 1, 1)), np.zeros(3), sk.GLOBAL)
    with pytest.raises(InterpretationMismatch):
        sk.fk_local(skel, pose)
    with pytest.raises(InterpretationMismatch):
        sk.fk_global(skel, sk.Pose(pose.rotations, pose.root_translation, sk.LOCAL))
    with pytest.raises(InterpretationMismatch):
        sk.locals_to_globals(skel, pose)


def test_bone_length_preservation(rng):
    skel = random_tree_skeleton(rng, 20)
    pose = random_local_pose(rng, skel)
    _, pos = sk.fk_local(skel, pose)
    for p, c in skel.edges:
        rest_len = np.linalg.norm(skel.rest_positions[c] - skel.rest_positions[p])
        posed_len = np.linalg.norm(pos[c] - pos[p])
        assert abs(rest_len - posed_len) < 1e-9


def test_skeleton_invariants():
    with pytest.raises(ValueError):
        sk.Skeleton(("a", "b"), np.array([-1, -1]), np.zeros((2, 3)))  # two roots
    with pytest.raises(ValueError):
        sk.Skeleton(("a", "b", "c"), np.array([-1, 2, 1]), np.zeros((3, 3)))  # bad order
    with pytest.raises(ValueError):
        sk.Skeleton(("a", "b"), np.array([-1, 0]), np.array([[0, 0, 0], [np.inf, 0, 0]]))


def test_error_accumulation_closed_form():
    eps = 0.01
    table = sk.error_accumulation_experiment(10, eps)
    expected_local = 2 * np.arange(1, 11) * np.sin(eps / 2)
    expected_global = np.full(10, 2 * np.sin(eps / 2))
    np.testing.assert_allclose(table["local"], expected_local, atol=1e-12)
    np.testing.assert_allclose(table["global"], expected_global, atol=1e-12)
    # tip displacement examples: D=10
    assert abs(table["local"][-1] - 2 * 10 * np.sin(0.005)) < 1e-12
    assert abs(table["global"][-1] - 2 * np.sin(0.005)) < 1e-12


def test_error_accumulation_brute_force_oracle(rng):
    # independently evaluate the perturbed chains with the unrolled oracle
    eps = 0.01
    depth = 7
    table = sk.error_accumulation_experiment(depth, eps)
    skel = sk.chain_skeleton(depth)
    rots = np.tile(np.eye(3), (depth + 1, 1, 1))
    rots[0] = rotation.axis_rotation("Z", eps)
    pos = unrolled_fk_oracle(skel, sk.Pose(rots, np.zeros(3), sk.LOCAL))
    np.testing.assert_allclose(
        table["local"], np.linalg.norm(pos - skel.rest_positions, axis=-1)[1:], atol=1e-12)


def test_error_accumulation_zero_epsilon():
    table = sk.error_accumulation_experiment(5, 0.0)
    assert np.all(table["local"] == 0)
    assert np.all(table["global"] == 0)


def test_error_accumulation_growth():
    table = sk.error_accumulation_experiment(20, 0.05)
    ratios = table["local"] / table["global"]
    np.testing.assert_allclose(ratios, np.arange(1, 21), rtol=1e-9)
    assert np.all(np.diff(table["local"]) > 0)  # linear growth in depth
    assert np.allclose(np.diff(table["global"]), 0, atol=1e-12)  # depth-independent


def test_error_accumulation_preconditions():
    with pytest.raises(ValueError):
        sk.error_accumulation_experiment(1, 0.01)
    with pytest.raises(ValueError):
        sk.error_accumulation_experiment(5, np.pi)
