"""Tape-based reverse-mode differentiation over numpy arrays.

Only the handful of operations the beamforming networks need are provided.
Every ``Tensor`` produced by an op remembers its parents and a closure that
pushes its gradient back to them; ``Tensor.backward`` walks the recorded graph
in reverse topological order.

All arithmetic is float64.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaf
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return index(self, idx)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _make(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None,
        )

    return _make(out, (a, b), bw)


def matmul(a, b):
    """Matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _make(a.data @ b.data, (a, b), bw)


def linear(x, w, b):
    """``x @ w + b`` for a 2-D batch; one tape node instead of two."""

    def bw(g):
        return (
            g @ w.data.T if x.requires_grad else None,
            x.data.T @ g,
            g.sum(axis=0),
        )

    return _make(x.data @ w.data + b.data, (x, w, b), bw)


def relu(x):
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return _make(x.data * mask, (x,), bw)


def exp(x):
    out = np.exp(x.data)

    def bw(g):
        return (g * out,)

    return _make(out, (x,), bw)


def log(x):
    def bw(g):
        return (g / x.data,)

    return _make(np.log(x.data), (x,), bw)


def sqrt(x):
    out = np.sqrt(x.data)

    def bw(g):
        return (g * 0.5 / out,)

    return _make(out, (x,), bw)


def square(x):
    def bw(g):
        return (2.0 * g * x.data,)

    return _make(x.data * x.data, (x,), bw)


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.shape).copy(),)

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw)


def mean(x, axis=None):
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def reshape(x, shape):
    def bw(g):
        return (g.reshape(x.shape),)

    return _make(x.data.reshape(shape), (x,), bw)


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([x.data for x in xs], axis=axis), tuple(xs), bw)


def index(x, idx):
    """Fancy/basic indexing; gradient scattered back with ``np.add.at``."""

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(x.data[idx], (x,), bw)


def scatter(x, idx, shape):
    """Return zeros(shape) with ``x`` accumulated at ``idx`` (inverse of ``index``)."""
    out = np.zeros(shape)
    np.add.at(out, idx, x.data)

    def bw(g):
        return (g[idx],)

    return _make(out, (x,), bw)


def segment_sum(x, seg, n_seg):
    """Sum rows of ``x`` into ``n_seg`` buckets given by integer ids ``seg``."""
    out = np.zeros((n_seg,) + x.shape[1:])
    np.add.at(out, seg, x.data)

    def bw(g):
        return (g[seg],)

    return _make(out, (x,), bw)


def segment_softmax(scores, seg, n_seg):
    """Softmax of a 1-D score vector within each segment.

    The per-segment max shift is treated as a constant; softmax is invariant to it,
    so the gradient is exact.
    """
    s = scores.data
    m = np.full(n_seg, -np.inf)
    np.maximum.at(m, seg, s)
    e = np.exp(s - m[seg])
    z = np.zeros(n_seg)
    np.add.at(z, seg, e)
    out = e / z[seg]

    def bw(g):
        # d alpha_j = alpha_j (g_j - sum_k alpha_k g_k) within a segment
        dots = np.zeros(n_seg)
        np.add.at(dots, seg, g * out)
        return (out * (g - dots[seg]),)

    return _make(out, (scores,), bw)


def batchnorm(x, gamma, beta, eps):
    """Training-mode batch normalisation over axis 0 using batch statistics."""
    n = x.shape[0]
    mu = x.data.mean(axis=0)
    xc = x.data - mu
    var = (xc * xc).mean(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        ggamma = (g * xhat).sum(axis=0)
        gbeta = g.sum(axis=0)
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data
            gx = inv / n * (n * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0))
        return gx, ggamma, gbeta

    out = _make(xhat * gamma.data + beta.data, (x, gamma, beta), bw)
    return out, mu, var


def power_scale(power, limit):
    """Per-entry factor ``sqrt(limit / power)`` where ``power > limit``, else 1."""
    p = power.data
    over = p > limit
    safe = np.where(over, p, 1.0)
    out = np.where(over, np.sqrt(limit / safe), 1.0)

    def bw(g):
        return (np.where(over, -0.5 * g * out / safe, 0.0),)

    return _make(out, (power,), bw)
