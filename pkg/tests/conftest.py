import numpy as np
import pytest

from gdiff import motion, rotation, skeleton as sk


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_tree_skeleton(rng, n_joints):
    """Random topologically-ordered joint tree with finite offsets."""
    parents = np.array([-1] + [int(rng.integers(0, k)) for k in range(1, n_joints)])
    offsets = rng.uniform(-1.0, 1.0, size=(n_joints, 3))
    offsets[0] = 0.0
    names = tuple(f"j{k}" for k in range(n_joints))
    return sk.Skeleton(names, parents, offsets)


def random_local_pose(rng, skel):
    return sk.Pose(rotation.random_rotation(rng, (skel.n_joints,)),
                   rng.uniform(-1, 1, 3), sk.LOCAL)


def random_motion(rng, skel, frames):
    """Valid global-6D motion channels for a skeleton."""
    sixd = rotation.random_rot6d(rng, (frames, skel.n_joints))
    root = 0.2 * rng.standard_normal((frames, 3))
    return motion.merge_channels(sixd, root)
