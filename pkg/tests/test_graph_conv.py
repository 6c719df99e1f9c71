"""Graph convolution vs the quadruple-loop reference."""

import numpy as np
from conftest import dyadic
from oracles import graph_conv_quadruple_loop

from gohome.nn.layers import GraphConv
from gohome.nn.tensor import Tensor

RELS = ("predecessor", "successor", "left", "right")


def random_instance(rng, dyadic_values=True):
    n = int(rng.integers(1, 17))
    c = int(rng.integers(1, 9))
    draw = (lambda shape: dyadic(rng, shape)) if dyadic_values else (
        lambda shape: rng.normal(size=shape)
    )
    f = draw((n, c))
    gc = GraphConv(c, RELS, np.random.default_rng(rng.integers(1 << 31)))
    gc.W.data = draw((c, c))
    adjs = []
    edges = {}
    for rel, wr in zip(RELS, gc.W_rel):
        wr.data = draw((c, c))
        a = (rng.random((n, n)) < rng.uniform(0.0, 0.3)).astype(np.float64)
        adjs.append(a)
        dst, src = np.nonzero(a)  # A[i, j] pulls j's features into row i
        edges[rel] = (src, dst)
    return f, gc, adjs, edges


class TestOracleEquivalence:
    def test_50_random_graphs_exact(self):
        # Values are dyadic rationals whose products and sums stay exactly
        # representable, so loop order cannot perturb the result and any
        # difference is a structural bug.
        rng = np.random.default_rng(42)
        for _ in range(50):
            f, gc, adjs, edges = random_instance(rng)
            got = gc(Tensor(f), edges).data
            want = graph_conv_quadruple_loop(f, gc.W.data, [w.data for w in gc.W_rel], adjs)
            np.testing.assert_array_equal(got, want)

    def test_continuous_values_close(self):
        rng = np.random.default_rng(43)
        for _ in range(10):
            f, gc, adjs, edges = random_instance(rng, dyadic_values=False)
            got = gc(Tensor(f), edges).data
            want = graph_conv_quadruple_loop(f, gc.W.data, [w.data for w in gc.W_rel], adjs)
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-13)


class TestPermutationEquivariance:
    def test_random_l8_instances(self):
        rng = np.random.default_rng(44)
        for _ in range(20):
            c = 4
            f = dyadic(rng, (8, c))
            gc = GraphConv(c, RELS, np.random.default_rng(rng.integers(1 << 31)))
            for w in [gc.W] + gc.W_rel:
                w.data = dyadic(rng, (c, c))
            edges = {}
            for rel in RELS:
                a = (rng.random((8, 8)) < 0.2).astype(np.float64)
                dst, src = np.nonzero(a)
                edges[rel] = (src, dst)
            base = gc(Tensor(f), edges).data

            perm = rng.permutation(8)
            inv = np.argsort(perm)
            perm_edges = {rel: (inv[src], inv[dst]) for rel, (src, dst) in edges.items()}
            permuted = gc(Tensor(f[perm]), perm_edges).data
            np.testing.assert_array_equal(permuted, base[perm])
