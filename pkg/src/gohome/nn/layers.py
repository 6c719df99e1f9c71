"""Neural layers: linear, 1D convolution, GRU cell, attention, layer norm,
and the relation-typed graph convolution.

Every layer is a Module exposing parameters() / named_parameters() and an
analytic flops(...) count that mirrors, term for term, what the runtime op
counter tallies during forward.  Weights initialize uniform in
[-1/sqrt(fan_in), +1/sqrt(fan_in)] from a caller-supplied generator.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ShapeMismatchError
from . import tensor as T
from .tensor import Tensor

LN_EPS = 1e-12


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Module:
    """Parameter container; submodules discovered from attribute order."""

    def named_parameters(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((key, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{key}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{key}.{i}", item))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self):
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias=True):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.W = uniform_init(rng, (in_dim, out_dim), in_dim)
        self.b = uniform_init(rng, (out_dim,), in_dim) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatchError(f"linear expects (..., {self.in_dim}), got {x.shape}")
        y = T.matmul(x, self.W)
        return y if self.b is None else T.add(y, self.b)

    def flops(self, n_rows: int) -> int:
        return n_rows * self.in_dim * self.out_dim


class Conv1d(Module):
    """Temporal convolution with odd kernel and zero same-padding.

    Input (B, T, Cin) -> (B, T, Cout).  Implemented as gather-of-shifts plus
    one matmul so the backward pass comes from the primitive ops.
    """

    def __init__(self, kernel: int, in_dim: int, out_dim: int, rng: np.random.Generator):
        if kernel % 2 != 1:
            raise ShapeMismatchError("conv1d kernel must be odd for same padding")
        self.kernel, self.in_dim, self.out_dim = kernel, in_dim, out_dim
        self.W = uniform_init(rng, (kernel * in_dim, out_dim), kernel * in_dim)
        self.b = uniform_init(rng, (out_dim,), kernel * in_dim)

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 3 or x.shape[2] != self.in_dim:
            raise ShapeMismatchError(f"conv1d expects (B, T, {self.in_dim}), got {x.shape}")
        B, t = x.shape[0], x.shape[1]
        half = self.kernel // 2
        padded = T.pad_axis(x, 1, half, half)
        taps = [padded[:, k : k + t, :] for k in range(self.kernel)]
        patches = T.reshape(T.concat(taps, axis=2), (B * t, self.kernel * self.in_dim))
        out = T.add(T.matmul(patches, self.W), self.b)
        return T.reshape(out, (B, t, self.out_dim))

    def flops(self, batch: int, t: int) -> int:
        return batch * t * self.kernel * self.in_dim * self.out_dim


class GRUCell(Module):
    """Gated recurrent cell: update/reset gates plus a candidate state."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.in_dim, self.hidden = in_dim, hidden
        self.Wx = uniform_init(rng, (in_dim, 3 * hidden), in_dim)
        self.Wh = uniform_init(rng, (hidden, 3 * hidden), hidden)
        self.b = uniform_init(rng, (3 * hidden,), hidden)

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        gx = T.add(T.matmul(x, self.Wx), self.b)
        gh = T.matmul(h, self.Wh)
        n = self.hidden
        z = T.sigmoid(T.add(gx[:, :n], gh[:, :n]))
        r = T.sigmoid(T.add(gx[:, n : 2 * n], gh[:, n : 2 * n]))
        cand = T.tanh(T.add(gx[:, 2 * n :], T.mul(r, gh[:, 2 * n :])))
        return T.add(T.mul(T.add(Tensor(1.0), T.neg(z)), cand), T.mul(z, h))

    def step_flops(self, batch: int) -> int:
        n = self.hidden
        return batch * (3 * self.in_dim * n + 3 * n * n + 5 * n)


def run_gru(cell: GRUCell, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Run a GRU over (B, T, C) and return the last hidden state (B, H).

    ``mask`` is an optional (B, T) 0/1 array; masked steps leave the hidden
    state untouched, so leading gaps reproduce the truncated sequence
    bit-for-bit.
    """
    B, t = x.shape[0], x.shape[1]
    if mask is None:
        mask = np.ones((B, t))
    h = Tensor(np.zeros((B, cell.hidden)))
    for step in range(t):
        h_new = cell.step(x[:, step, :], h)
        m = Tensor(mask[:, step : step + 1])
        h = T.add(T.mul(m, h_new), T.mul(T.add(Tensor(1.0), T.neg(m)), h))
    return h


def gru_flops(cell: GRUCell, batch: int, t: int) -> int:
    # step cost plus the two mask-blend multiplies per hidden unit
    return t * (cell.step_flops(batch) + 2 * batch * cell.hidden)


class LayerNorm(Module):
    """Normalize the last axis to zero mean, unit variance, then rescale."""

    def __init__(self, dim: int):
        self.dim = dim
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        mu = T.tmean(x, axis=-1, keepdims=True)
        xc = T.add(x, T.neg(mu))
        var = T.tmean(T.mul(xc, xc), axis=-1, keepdims=True)
        y = T.div(xc, T.sqrt(T.add(var, Tensor(LN_EPS))))
        return T.add(T.mul(y, self.gamma), self.beta)

    def flops(self, n_rows: int) -> int:
        return 3 * n_rows * self.dim + 3 * n_rows


class Attention(Module):
    """Single-head scaled dot-product attention with output projection."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.dim = dim
        self.Wq = Linear(dim, dim, rng)
        self.Wk = Linear(dim, dim, rng)
        self.Wv = Linear(dim, dim, rng)
        self.Wo = Linear(dim, dim, rng)
        self._scale = 1.0 / np.sqrt(dim)

    def __call__(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        q = self.Wq(queries)
        k = self.Wk(keys_values)
        v = self.Wv(keys_values)
        scores = T.mul(T.matmul(q, k.T), Tensor(self._scale))
        return self.Wo(T.matmul(T.softmax(scores, axis=-1), v))

    def flops(self, n_q: int, n_kv: int) -> int:
        c = self.dim
        return 2 * n_q * c * c + 2 * n_kv * c * c + 2 * n_q * n_kv * c + 2 * n_q * n_kv


class GraphConv(Module):
    """Relation-typed graph convolution: F <- F W + sum_r A_r F W_r.

    Edges come as per-relation (src, dst) index arrays meaning
    out[dst] += F[src] before the relation weight; relations with no edges
    are skipped entirely (their term is exactly zero).
    """

    def __init__(self, dim: int, relations: tuple[str, ...], rng: np.random.Generator):
        self.dim = dim
        self.relations = tuple(relations)
        self.W = uniform_init(rng, (dim, dim), dim)
        self.W_rel = [uniform_init(rng, (dim, dim), dim) for _ in relations]

    def __call__(self, f: Tensor, edges: dict[str, tuple[np.ndarray, np.ndarray]]) -> Tensor:
        if f.data.ndim != 2 or f.shape[1] != self.dim:
            raise ShapeMismatchError(f"graph_conv expects (L, {self.dim}), got {f.shape}")
        n = f.shape[0]
        out = T.matmul(f, self.W)
        for rel, w in zip(self.relations, self.W_rel):
            src, dst = edges.get(rel, ((), ()))
            src = np.asarray(src, dtype=np.intp)
            if src.size == 0:
                continue
            agg = T.edge_aggregate(f, src, dst, n)
            out = T.add(out, T.matmul(agg, w))
        return out

    def flops(self, n_lanelets: int, edge_counts: dict[str, int]) -> int:
        total = n_lanelets * self.dim * self.dim
        for rel in self.relations:
            e = int(edge_counts.get(rel, 0))
            if e:
                total += e * self.dim + n_lanelets * self.dim * self.dim
        return total


def flops(layer: Module, input_shape: tuple) -> int:
    """Analytic multiply-add count for a layer applied at the given sizes."""
    return layer.flops(*input_shape)
