"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: every operation returns a new :class:`Tensor` holding the
numpy result plus a closure that maps the output gradient to gradients of
the operation's inputs.  ``backward()`` on a scalar walks the tape in
reverse topological order.  Everything is float64; ops never produce
NaN/Inf silently (callers guard their domains).
"""

from __future__ import annotations

import numpy as np
from scipy import special as _special

__all__ = [
    "Tensor",
    "constant",
    "parameter",
    "as_tensor",
    "add",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "log_sigmoid",
    "exp",
    "log",
    "cos",
    "square",
    "normal_cdf",
    "clip_min",
    "tsum",
    "concat",
    "reshape",
    "transpose",
    "broadcast_to",
    "slice_rows",
    "gather_rows",
    "scatter_rows",
    "segment_sum",
    "softmax",
    "grad_check",
]


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, _parents=(), _backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self):
        return float(self.value)

    def backward(self):
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order = _topo_order(self)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            out_grad = node.grad
            node.grad = None  # distributed below; free the buffer eagerly
            grads = node._backward(out_grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    # adopt fresh arrays; copy anything aliased (the output
                    # grad itself, or views into other arrays)
                    if g is out_grad or g.base is not None:
                        parent.grad = np.array(g, dtype=np.float64, copy=True)
                    else:
                        parent.grad = g
                else:
                    parent.grad += g

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), constant(-1.0)))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, constant(-1.0)))

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        if other.requires_grad:
            raise NotImplementedError("division only by constants")
        return mul(self, constant(1.0 / other.value))

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __pow__(self, k):
        if k != 2:
            raise NotImplementedError("only squaring is supported")
        return square(self)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def _topo_order(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


def constant(value):
    return Tensor(value)


def parameter(value):
    return Tensor(value, requires_grad=True)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(value, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(value)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- arithmetic -------------------------------------------------------------

def add(a, b):
    def backward(g):
        return (_unbroadcast(g, a.value.shape) if a.requires_grad else None,
                _unbroadcast(g, b.value.shape) if b.requires_grad else None)

    return _node(a.value + b.value, (a, b), backward)


def mul(a, b):
    def backward(g):
        return (_unbroadcast(g * b.value, a.value.shape) if a.requires_grad else None,
                _unbroadcast(g * a.value, b.value.shape) if b.requires_grad else None)

    return _node(a.value * b.value, (a, b), backward)


def matmul(a, b):
    """Matrix product; operands must be >= 2-D. Leading dims broadcast."""
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            if b.value.ndim == 2:
                ga = g @ b.value.T
            else:
                ga = _unbroadcast(np.matmul(g, np.swapaxes(b.value, -1, -2)), a.value.shape)
        if b.requires_grad:
            if b.value.ndim == 2 and a.value.ndim > 2:
                # weight gradient against stacked activations: fold the
                # leading axes into one GEMM instead of broadcasting
                ga_rows = a.value.reshape(-1, a.value.shape[-1])
                gb = ga_rows.T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.value, -1, -2), g), b.value.shape)
        return ga, gb

    return _node(np.matmul(a.value, b.value), (a, b), backward)


# -- elementwise nonlinearities ----------------------------------------------

def tanh(x):
    y = np.tanh(x.value)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _node(y, (x,), backward)


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    y = _sigmoid(np.asarray(x.value, dtype=np.float64))

    def backward(g):
        return (g * y * (1.0 - y),)

    return _node(y, (x,), backward)


def log_sigmoid(x):
    """log(sigmoid(x)) computed without overflow."""
    v = x.value
    y = np.where(v >= 0, -np.log1p(np.exp(-np.abs(v))), v - np.log1p(np.exp(-np.abs(v))))

    def backward(g):
        return (g * _sigmoid(-v),)

    return _node(y, (x,), backward)


def exp(x):
    y = np.exp(x.value)

    def backward(g):
        return (g * y,)

    return _node(y, (x,), backward)


def log(x):
    def backward(g):
        return (g / x.value,)

    return _node(np.log(x.value), (x,), backward)


def cos(x):
    def backward(g):
        return (-g * np.sin(x.value),)

    return _node(np.cos(x.value), (x,), backward)


def square(x):
    def backward(g):
        return (2.0 * g * x.value,)

    return _node(x.value * x.value, (x,), backward)


def normal_cdf(x):
    """Standard normal CDF applied elementwise."""
    def backward(g):
        return (g * np.exp(-0.5 * x.value * x.value) / np.sqrt(2.0 * np.pi),)

    return _node(_special.ndtr(x.value), (x,), backward)


def clip_min(x, lo):
    """max(x, lo); gradient is zero where the clamp is active."""
    keep = x.value > lo

    def backward(g):
        return (g * keep,)

    return _node(np.maximum(x.value, lo), (x,), backward)


# -- reductions / shape ------------------------------------------------------

def tsum(x, axis=None, keepdims=False):
    y = x.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.value.shape),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.value.shape),)

    return _node(y, (x,), backward)


def concat(tensors, axis=-1):
    sizes = [t.value.shape[axis] for t in tensors]

    def backward(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return _node(np.concatenate([t.value for t in tensors], axis=axis), tuple(tensors), backward)


def reshape(x, shape):
    def backward(g):
        return (g.reshape(x.value.shape),)

    return _node(x.value.reshape(shape), (x,), backward)


def transpose(x, axes):
    inv = np.argsort(axes)

    def backward(g):
        return (g.transpose(inv),)

    return _node(x.value.transpose(axes), (x,), backward)


def broadcast_to(x, shape):
    def backward(g):
        return (_unbroadcast(g, x.value.shape),)

    return _node(np.broadcast_to(x.value, shape).copy(), (x,), backward)


# -- indexing ----------------------------------------------------------------

def slice_rows(x, start, stop):
    """x[start:stop] along axis 0."""

    def backward(g):
        gx = np.zeros_like(x.value)
        gx[start:stop] = g
        return (gx,)

    return _node(x.value[start:stop], (x,), backward)


def gather_rows(x, idx):
    """x[idx] along axis 0; idx is an integer array."""
    idx = np.asarray(idx, dtype=np.intp)

    def backward(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(x.value[idx], (x,), backward)


def scatter_rows(base, idx, rows):
    """Copy of `base` with rows at unique indices `idx` replaced by `rows`."""
    idx = np.asarray(idx, dtype=np.intp)
    out = base.value.copy()
    out[idx] = rows.value

    def backward(g):
        gb = g.copy()
        gb[idx] = 0.0
        return gb, g[idx]

    return _node(out, (base, rows), backward)


def segment_sum(x, seg_ids, num_segments):
    """Sum rows of x into `num_segments` buckets given per-row bucket ids."""
    seg_ids = np.asarray(seg_ids, dtype=np.intp)
    out = np.zeros((num_segments,) + x.value.shape[1:], dtype=np.float64)
    np.add.at(out, seg_ids, x.value)

    def backward(g):
        return (g[seg_ids],)

    return _node(out, (x,), backward)


def softmax(x, axis=-1):
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        gy = g * y
        return (gy - y * gy.sum(axis=axis, keepdims=True),)

    return _node(y, (x,), backward)


# -- finite-difference harness -------------------------------------------------

def grad_check(f, points, eps=1e-5):
    """Compare analytic gradients of scalar ``f(*tensors)`` to central differences.

    ``points`` is a list of numpy arrays; returns the maximum relative error
    over every coordinate of every input.
    """
    tensors = [parameter(np.array(p, dtype=np.float64)) for p in points]
    out = f(*tensors)
    out.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.value) for t in tensors]

    max_err = 0.0
    for k, p in enumerate(points):
        base = np.array(p, dtype=np.float64)
        it = np.nditer(base, flags=["multi_index"])
        while not it.finished:
            i = it.multi_index
            hi = base.copy()
            hi[i] += eps
            lo = base.copy()
            lo[i] -= eps
            args_hi = [constant(base_j) for base_j in points[:k]] + [constant(hi)] + [constant(b) for b in points[k + 1:]]
            args_lo = [constant(base_j) for base_j in points[:k]] + [constant(lo)] + [constant(b) for b in points[k + 1:]]
            numeric = (f(*args_hi).item() - f(*args_lo).item()) / (2.0 * eps)
            a = float(analytic[k][i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
            max_err = max(max_err, err)
            it.iternext()
    return max_err
