import numpy as np
import pytest

from gdiff import tape as tp
from gdiff.errors import TapeExhausted


def build_graph(arrays):
    """A graph exercising every op; returns (tape, scalar loss, leaf dict)."""
    t = tp.Tape()
    leaves = {k: t.leaf(v, requires_grad=True) for k, v in arrays.items()}
    h = tp.conv1d(leaves["x"], leaves["w1"], leaves["b1"], stride=2, pad=1).relu()
    e = tp.gather_rows(leaves["emb"], [1, 0]).reshape(2, 1, 4)
    h = h * (1.0 + e) + e
    h = tp.concat([h, h.clip(-0.6, 0.6)], axis=-1)
    y = (h @ leaves["w2"] + leaves["b2"]).exp().clip(0.0, 4.0)
    part = y[:, 1:3, :]
    loss = ((y - 1.0) * (y - 1.0)).mean() + 0.1 * part.sum() + (-y).mean(axis=0).sum() * 0.01
    return t, loss, leaves


@pytest.fixture
def arrays(rng):
    return {
        "x": rng.standard_normal((2, 7, 5)),
        "w1": 0.4 * rng.standard_normal((15, 4)),
        "b1": 0.1 * rng.standard_normal(4),
        "w2": 0.4 * rng.standard_normal((8, 3)),
        "b2": 0.1 * rng.standard_normal(3),
        "emb": 0.5 * rng.standard_normal((3, 4)),
    }


def test_gradients_match_finite_differences(arrays, rng):
    t, loss, leaves = build_graph(arrays)
    t.backward(loss)
    grads = {k: v.grad for k, v in leaves.items()}
    h = 1e-6
    worst = 0.0
    for key, arr in arrays.items():
        flat = arr.reshape(-1)
        idx = rng.choice(flat.size, size=min(flat.size, 25), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = build_graph(arrays)[1].data
            flat[i] = orig - h
            down = build_graph(arrays)[1].data
            flat[i] = orig
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(fd - grads[key].reshape(-1)[i]) / max(1.0, abs(fd)))
    assert worst < 1e-5


def test_zero_loss_zero_gradients(rng):
    t = tp.Tape()
    x = t.leaf(np.zeros((3, 4)), requires_grad=True)
    loss = (x * x).sum()
    t.backward(loss)
    assert loss.data == 0.0
    np.testing.assert_allclose(x.grad, 0.0)


def test_gradient_linearity(rng):
    a = rng.standard_normal((4, 4))
    w = rng.standard_normal((4, 2))

    def grad_of(scale1, scale2):
        t = tp.Tape()
        x = t.leaf(a, requires_grad=True)
        l1 = ((x @ t.leaf(w)) * (x @ t.leaf(w))).sum()
        l2 = x.relu().mean()
        t.backward(l1 * scale1 + l2 * scale2)
        return x.grad

    g1 = grad_of(1.0, 0.0)
    g2 = grad_of(0.0, 1.0)
    g12 = grad_of(1.0, 1.0)
    np.testing.assert_allclose(g12, g1 + g2, atol=1e-12)


def test_tape_exhausted(rng):
    t = tp.Tape()
    x = t.leaf(rng.standard_normal(3), requires_grad=True)
    loss = (x * x).sum()
    t.backward(loss)
    with pytest.raises(TapeExhausted):
        t.backward(loss)


def test_backward_requires_scalar(rng):
    t = tp.Tape()
    x = t.leaf(rng.standard_normal(3), requires_grad=True)
    with pytest.raises(ValueError):
        t.backward(x * 2.0)


def test_extra_grads_injection(rng):
    a = rng.standard_normal((2, 3))
    g_extra = rng.standard_normal((2, 3))
    t = tp.Tape()
    x = t.leaf(a, requires_grad=True)
    y = x * 2.0
    loss = (y * y).mean()
    t.backward(loss, extra_grads={y: g_extra})
    # d/dx [mean(4 x^2) + <g, 2x>] = 8x/6 + 2 g
    np.testing.assert_allclose(x.grad, 8 * a / a.size + 2 * g_extra, atol=1e-12)


def test_broadcast_unbroadcast(rng):
    t = tp.Tape()
    x = t.leaf(rng.standard_normal((4, 5)), requires_grad=True)
    b = t.leaf(rng.standard_normal((1, 5)), requires_grad=True)
    loss = (x + b).sum()
    t.backward(loss)
    np.testing.assert_allclose(x.grad, np.ones((4, 5)))
    np.testing.assert_allclose(b.grad, np.full((1, 5), 4.0))


def test_conv1d_shapes(rng):
    t = tp.Tape()
    x = t.leaf(rng.standard_normal((2, 9, 3)))
    w = t.leaf(rng.standard_normal((9, 5)))
    b = t.leaf(np.zeros(5))
    assert tp.conv1d(x, w, b, stride=1, pad=1).shape == (2, 9, 5)
    assert tp.conv1d(x, w, b, stride=2, pad=1).shape == (2, 4, 5)
    assert tp.conv1d(x, w, b, stride=4, pad=1).shape == (2, 2, 5)


def test_narrow_expand_roundtrip(rng):
    t = tp.Tape()
    idx = np.array([0, 2, 5])
    x = t.leaf(rng.standard_normal((2, 4, 6)), requires_grad=True)
    sub = x[..., idx]
    full = tp.expand_at(sub, (Ellipsis, idx), (2, 4, 6))
    loss = (full * full).sum()
    t.backward(loss)
    expected = np.zeros((2, 4, 6))
    expected[..., idx] = 2 * x.data[..., idx]
    np.testing.assert_allclose(x.grad, expected)
