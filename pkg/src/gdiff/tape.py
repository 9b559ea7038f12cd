"""Minimal reverse-mode autodiff over float64 NumPy arrays.

Operations record onto a Tape in execution order (already a topological
order), so the backward sweep is a single reversed pass. Gradients flow only
into tensors that require them; broadcasting in forward ops is undone by
summing on the way back.

The engine covers exactly what the conditional generator and the temporal
encoder need: elementwise arithmetic, matmul, strided 1-D convolution, row
gather (embeddings), slicing/concat, reductions, relu/exp/clip.
"""

from __future__ import annotations

import numpy as np

from .errors import TapeExhausted


class Tensor:
    __slots__ = ("data", "grad", "tape", "requires_grad")

    def __init__(self, data, tape, requires_grad):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.tape = tape
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_coerce(other, self.tape), -1.0))

    def __rsub__(self, other):
        return add(_coerce(other, self.tape), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def clip(self, lo, hi):
        return clip(self, lo, hi)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


class Tape:
    """Execution-ordered op record; consumable by one backward sweep."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def leaf(self, data, requires_grad=False):
        return Tensor(data, self, requires_grad)

    def _record(self, out, links):
        # links: [(parent Tensor, vjp(grad_out) -> grad_parent), ...]
        self._nodes.append((out, [l for l in links if l[0].requires_grad]))
        return out

    def backward(self, loss, extra_grads=None):
        """
        Reverse sweep from ``loss`` (seeded with 1.0).

        ``extra_grads`` maps intermediate Tensors to gradient arrays added
        at those nodes before propagation; that is how externally computed
        (analytic) loss gradients join the sweep.
        """
        if self._consumed:
            raise TapeExhausted("tape already consumed by a previous backward")
        self._consumed = True
        if loss.data.shape != ():
            raise ValueError("backward expects a scalar loss")
        loss.grad = np.ones(())
        if extra_grads:
            for t, g in extra_grads.items():
                g = np.asarray(g, dtype=np.float64)
                if g.shape != t.data.shape:
                    raise ValueError(f"extra grad shape {g.shape} != tensor {t.data.shape}")
                t.grad = g if t.grad is None else t.grad + g
        for out, links in reversed(self._nodes):
            if out.grad is None:
                continue
            for parent, vjp in links:
                g = vjp(out.grad)
                parent.grad = g if parent.grad is None else parent.grad + g


def _coerce(x, tape):
    if isinstance(x, Tensor):
        return x
    return tape.leaf(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad, shape):
    """Sum grad down to ``shape`` (inverse of NumPy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a = _coerce(a, a.tape if isinstance(a, Tensor) else b.tape)
    b = _coerce(b, a.tape)
    out = Tensor(a.data + b.data, a.tape, a.requires_grad or b.requires_grad)
    return a.tape._record(out, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ])


def mul(a, b):
    a = _coerce(a, a.tape if isinstance(a, Tensor) else b.tape)
    b = _coerce(b, a.tape)
    out = Tensor(a.data * b.data, a.tape, a.requires_grad or b.requires_grad)
    return a.tape._record(out, [
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ])


def matmul(a, b):
    out = Tensor(a.data @ b.data, a.tape, a.requires_grad or b.requires_grad)

    def grad_a(g):
        return _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)

    def grad_b(g):
        return _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)

    return a.tape._record(out, [(a, grad_a), (b, grad_b)])


def relu(a):
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0), a.tape, a.requires_grad)
    return a.tape._record(out, [(a, lambda g: g * mask)])


def exp(a):
    val = np.exp(a.data)
    out = Tensor(val, a.tape, a.requires_grad)
    return a.tape._record(out, [(a, lambda g: g * val)])


def clip(a, lo, hi):
    inside = (a.data > lo) & (a.data < hi)
    out = Tensor(np.clip(a.data, lo, hi), a.tape, a.requires_grad)
    return a.tape._record(out, [(a, lambda g: g * inside)])


def reduce_sum(a, axis=None):
    out = Tensor(a.data.sum(axis=axis), a.tape, a.requires_grad)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.data.shape).copy()

    return a.tape._record(out, [(a, vjp)])


def reduce_mean(a, axis=None):
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(reduce_sum(a, axis), 1.0 / n)


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape), a.tape, a.requires_grad)
    return a.tape._record(out, [(a, lambda g: g.reshape(a.data.shape))])


def narrow(a, key):
    out = Tensor(a.data[key], a.tape, a.requires_grad)

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return full

    return a.tape._record(out, [(a, vjp)])


def concat(tensors, axis=-1):
    tape = tensors[0].tape
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor(data, tape, any(t.requires_grad for t in tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    links = []
    for i, t in enumerate(tensors):
        def vjp(g, i=i):
            return np.split(g, splits, axis=axis)[i]
        links.append((t, vjp))
    return tape._record(out, links)


def expand_at(a, key, shape):
    """Place ``a`` into zeros of ``shape`` at ``key`` (inverse of narrow)."""
    data = np.zeros(shape)
    data[key] = a.data
    out = Tensor(data, a.tape, a.requires_grad)
    return a.tape._record(out, [(a, lambda g: g[key])])


def gather_rows(table, indices):
    """Embedding lookup: out[i] = table[indices[i]]."""
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(table.data[idx], table.tape, table.requires_grad)

    def vjp(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return full

    return table.tape._record(out, [(table, vjp)])


def _im2col(x, kernel, stride, pad):
    """(B, T, C) -> (B, To, kernel*C), channel blocks ordered by tap."""
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    t_out = (x.shape[1] - kernel) // stride + 1
    cols = [x[:, k : k + stride * t_out : stride, :] for k in range(kernel)]
    return np.concatenate(cols, axis=-1), t_out


def conv1d(x, weight, bias, stride=1, pad=1):
    """
    Temporal convolution: x (B, T, Cin), weight (kernel*Cin, Cout),
    bias (Cout,). Returns (B, To, Cout) with To = (T + 2*pad - kernel)//stride + 1.
    """
    kernel = weight.data.shape[0] // x.data.shape[-1]
    col, t_out = _im2col(x.data, kernel, stride, pad)
    out_data = col @ weight.data + bias.data
    out = Tensor(out_data, x.tape, x.requires_grad or weight.requires_grad or bias.requires_grad)
    cin = x.data.shape[-1]

    def grad_x(g):
        gcol = g @ weight.data.T  # (B, To, kernel*Cin)
        padded = np.zeros((x.data.shape[0], x.data.shape[1] + 2 * pad, cin))
        for k in range(kernel):
            padded[:, k : k + stride * t_out : stride, :] += gcol[..., k * cin : (k + 1) * cin]
        return padded[:, pad : padded.shape[1] - pad, :] if pad else padded

    def grad_w(g):
        return col.reshape(-1, col.shape[-1]).T @ g.reshape(-1, g.shape[-1])

    def grad_b(g):
        return g.sum(axis=(0, 1))

    return x.tape._record(out, [(x, grad_x), (weight, grad_w), (bias, grad_b)])
