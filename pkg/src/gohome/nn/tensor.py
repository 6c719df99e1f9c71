"""Reverse-mode automatic differentiation over float64 numpy arrays.

Tape-style tensors: every operation stores the parent tensors and a closure
that routes the output gradient back to them.  Only the ops the model needs
are provided; broadcasting is limited to what those ops use.

A process-global counter tallies the scalar multiplies and divides each
forward op performs (additions are free under this convention, sparse
aggregation counts one multiply-accumulate per edge and channel).  The
counter is what the complexity benchmark reads, so op implementations must
keep their counts in sync with what they actually compute.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..exceptions import BackwardStateError, ShapeMismatchError


class OpCounter:
    """Running total of counted scalar multiply/divide operations."""

    __slots__ = ("total",)

    def __init__(self):
        self.total = 0

    def add(self, n):
        self.total += int(n)

    def reset(self):
        self.total = 0


op_counter = OpCounter()


@contextmanager
def recording():
    """Yield a fresh-zeroed view of op counts for the enclosed block."""
    start = op_counter.total

    class _Box:
        total = 0

    box = _Box()
    try:
        yield box
    finally:
        box.total = op_counter.total - start


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference fast path)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backprop", "_backward_ran")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backprop = None
        self._backward_ran = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Populate .grad on every reachable tensor with requires_grad."""
        if self.data.size != 1:
            raise ShapeMismatchError(f"backward needs a scalar, got shape {self.data.shape}")
        if self._backward_ran:
            raise BackwardStateError("backward already ran on this tensor; rebuild the graph")
        self._backward_ran = True
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backprop is not None and node.grad is not None:
                node._backprop(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_scalar(self, p)

    def __getitem__(self, key):
        return slice_view(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backprop):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backprop = backprop
    return out


def _accum(t: Tensor, g: np.ndarray):
    """Accumulate a gradient that may alias or view the caller's buffer."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad += g


def _accum_owned(t: Tensor, g: np.ndarray):
    """Accumulate a gradient buffer the caller freshly allocated.

    Skips the defensive copy in _accum; only safe when g is writable,
    exactly shaped, and referenced nowhere else.
    """
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backprop(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backprop)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backprop(g):
        _accum_owned(a, -g)

    return _make(-a.data, (a,), backprop)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    op_counter.add(data.size)

    def backprop(g):
        _accum_owned(a, _unbroadcast(g * b.data, a.data.shape))
        _accum_owned(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backprop)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data
    op_counter.add(data.size)

    def backprop(g):
        _accum_owned(a, _unbroadcast(g / b.data, a.data.shape))
        _accum_owned(b, _unbroadcast(-g * data / b.data, b.data.shape))

    return _make(data, (a, b), backprop)


def pow_scalar(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    data = a.data**p
    op_counter.add(data.size)

    def backprop(g):
        _accum_owned(a, g * p * a.data ** (p - 1.0))

    return _make(data, (a,), backprop)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)
    op_counter.add(data.size)

    def backprop(g):
        _accum_owned(a, g * 0.5 / data)

    return _make(data, (a,), backprop)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backprop(g):
        _accum_owned(a, g * data)

    return _make(data, (a,), backprop)


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def backprop(g):
        _accum_owned(a, g / a.data)

    return _make(data, (a,), backprop)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backprop(g):
        _accum_owned(a, g * (1.0 - data * data))

    return _make(data, (a,), backprop)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split form avoids overflow in exp for large |x|
    data = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    op_counter.add(data.size)

    def backprop(g):
        _accum_owned(a, g * data * (1.0 - data))

    return _make(data, (a,), backprop)


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backprop(g):
        _accum_owned(a, g * (a.data > 0.0))

    return _make(data, (a,), backprop)


def clamp(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    data = np.clip(a.data, lo, hi)

    def backprop(g):
        _accum_owned(a, g * ((a.data > lo) & (a.data < hi)))

    return _make(data, (a,), backprop)


# ---------------------------------------------------------------------------
# reductions

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backprop(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _make(data, (a,), backprop)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    op_counter.add(data.size)
    n = a.data.size / data.size

    def backprop(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g / n, a.data.shape))

    return _make(data, (a,), backprop)


def max_const(a, axis=None, keepdims=False) -> np.ndarray:
    """Detached max, used to stabilize softmax; no gradient flows through it."""
    a = as_tensor(a)
    return a.data.max(axis=axis, keepdims=keepdims)


def softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    e = exp(add(a, Tensor(-max_const(a, axis=axis, keepdims=True))))
    return div(e, tsum(e, axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# shape ops

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backprop(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(data, (a,), backprop)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    data = a.data.transpose(axes)
    inv = None if axes is None else np.argsort(axes)

    def backprop(g):
        _accum(a, g.transpose(inv))

    return _make(data, (a,), backprop)


def slice_view(a, key) -> Tensor:
    """Basic (non-duplicating) indexing; use gather_rows for index arrays."""
    a = as_tensor(a)
    data = a.data[key]

    def backprop(g):
        gx = np.zeros_like(a.data)
        gx[key] += g
        _accum_owned(a, gx)

    return _make(data, (a,), backprop)


def concat(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backprop(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, g[tuple(idx)])

    return _make(data, tuple(parts), backprop)


def pad_axis(a, axis: int, before: int, after: int) -> Tensor:
    a = as_tensor(a)
    widths = [(0, 0)] * a.data.ndim
    widths[axis] = (before, after)
    data = np.pad(a.data, widths)

    def backprop(g):
        idx = [slice(None)] * g.ndim
        idx[axis] = slice(before, g.shape[axis] - after)
        _accum(a, g[tuple(idx)])

    return _make(data, (a,), backprop)


def broadcast_rows(a, n: int) -> Tensor:
    """(1, C) -> (n, C) copy; the backward pass sums the rows back."""
    a = as_tensor(a)
    if a.data.ndim != 2 or a.data.shape[0] != 1:
        raise ShapeMismatchError(f"broadcast_rows expects (1, C), got {a.data.shape}")
    data = np.broadcast_to(a.data, (n, a.data.shape[1])).copy()

    def backprop(g):
        _accum_owned(a, g.sum(axis=0, keepdims=True))

    return _make(data, (a,), backprop)


# ---------------------------------------------------------------------------
# linear algebra and sparse aggregation

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatchError(f"matmul is 2D-only, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data
    op_counter.add(a.data.shape[0] * a.data.shape[1] * b.data.shape[1])

    def backprop(g):
        _accum_owned(a, g @ b.data.T)
        _accum_owned(b, a.data.T @ g)

    return _make(data, (a, b), backprop)


def _index_add(shape, idx, values) -> np.ndarray:
    """out[idx[e]] += values[e] over rows, accumulating in element order.

    Matches np.add.at semantics (contributions for a repeated index land in
    position order) but runs through one flat bincount, which is faster for
    the row counts seen here.
    """
    rows, cols = shape
    flat = (idx[:, None] * cols + np.arange(cols)).ravel()
    out = np.bincount(flat, weights=values.ravel(), minlength=rows * cols)
    return out.reshape(rows, cols)


def gather_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    data = a.data[idx]

    def backprop(g):
        if a.data.ndim == 2 and g.ndim == 2:
            gx = _index_add(a.data.shape, idx, g)
        else:
            gx = np.zeros_like(a.data)
            np.add.at(gx, idx, g)
        _accum_owned(a, gx)

    return _make(data, (a,), backprop)


def scatter_mean(a, idx, size: int) -> Tensor:
    """Group rows of a (N, C) tensor by idx and average each group.

    Rows land in a (size, C) output; empty groups stay zero.  Accumulation
    follows the order of idx (np.add.at semantics), which callers rely on
    for reproducible float sums.
    """
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    if a.data.ndim != 2 or idx.shape != (a.data.shape[0],):
        raise ShapeMismatchError(f"scatter_mean got {a.data.shape} with idx {idx.shape}")
    sums = _index_add((size, a.data.shape[1]), idx, a.data)
    counts = np.bincount(idx, minlength=size).astype(np.float64)
    denom = np.maximum(counts, 1.0)
    data = sums / denom[:, None]
    op_counter.add(data.size)

    def backprop(g):
        _accum_owned(a, (g / denom[:, None])[idx])

    return _make(data, (a,), backprop)


def edge_aggregate(a, src, dst, size: int) -> Tensor:
    """out[dst[e]] += a[src[e]] over edges, into a (size, C) output.

    Semantically a sparse 0/1 matrix product, so it is charged one
    multiply-accumulate per edge and channel.
    """
    a = as_tensor(a)
    src = np.asarray(src, dtype=np.intp)
    dst = np.asarray(dst, dtype=np.intp)
    if src.shape != dst.shape:
        raise ShapeMismatchError("edge_aggregate src/dst length mismatch")
    data = _index_add((size, a.data.shape[1]), dst, a.data[src])
    op_counter.add(src.size * a.data.shape[1])

    def backprop(g):
        _accum_owned(a, _index_add(a.data.shape, src, g[dst]))

    return _make(data, (a,), backprop)
