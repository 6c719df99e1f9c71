"""Scene encoding: lane graph and agent histories to fused graph features.

Pipeline (fixed order): per-lanelet sequence encoding (shared 1D conv + GRU
over centerline points) -> first graph-convolution stack -> per-agent history
encoding (shared 1D conv + GRU) -> cross-attention from agents onto lanes ->
self-attention between agents -> the target agent's feature concatenated to
every lane feature and projected back to C -> second graph-convolution stack.

Row order must not leak into the arithmetic: internally lanelets are sorted
by id and agents by their raw history bytes, every reduction happens in that
canonical order, and the results are gathered back to input order.  Permuting
the inputs therefore permutes the outputs bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SceneInputError
from .maps import RELATION_KINDS, LaneGraph, Lanelet, world_to_frame
from .nn import tensor as T
from .nn.layers import (
    Attention,
    Conv1d,
    GraphConv,
    GRUCell,
    LayerNorm,
    Linear,
    Module,
    gru_flops,
    run_gru,
)
from .nn.tensor import Tensor
from .scenes import AgentTrack, Scene

DEFAULT_CHANNELS = 64
POINT_FEATURES = 4   # x, y, cos(heading), sin(heading) per centerline point
TRACK_FEATURES = 4   # x, y, speed, relative yaw per history step
GRAPH_LAYERS = 4


def _wrap(a):
    return np.arctan2(np.sin(a), np.cos(a))


@dataclass(frozen=True)
class SceneFeatures:
    """Per-lane and per-agent encodings plus the fused graph encoding."""

    lane_features: Tensor     # (L, C) after the first graph stack
    agent_features: Tensor    # (N, C) after agent self-attention
    graph_encoding: Tensor    # (L, C) after the second graph stack
    target_index: int


class GraphConvBlock(Module):
    """Relation-typed graph convolution, layer norm, then relu."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.conv = GraphConv(dim, RELATION_KINDS, rng)
        self.norm = LayerNorm(dim)

    def __call__(self, f: Tensor, edges) -> Tensor:
        return T.relu(self.norm(self.conv(f, edges)))

    def flops(self, n_lanelets: int, edge_counts) -> int:
        return self.conv.flops(n_lanelets, edge_counts) + self.norm.flops(n_lanelets)


class GraphEncoder(Module):
    def __init__(self, dim: int, rng: np.random.Generator, layers: int = GRAPH_LAYERS):
        self.blocks = [GraphConvBlock(dim, rng) for _ in range(layers)]

    def __call__(self, f: Tensor, edges) -> Tensor:
        for block in self.blocks:
            f = block(f, edges)
        return f

    def flops(self, n_lanelets: int, edge_counts) -> int:
        return sum(b.flops(n_lanelets, edge_counts) for b in self.blocks)


class AttentionBlock(Module):
    """Residual single-head attention with layer norm and relu."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.attn = Attention(dim, rng)
        self.norm = LayerNorm(dim)

    def __call__(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        return T.relu(self.norm(T.add(queries, self.attn(queries, keys_values))))

    def flops(self, n_q: int, n_kv: int) -> int:
        return self.attn.flops(n_q, n_kv) + self.norm.flops(n_q)


class SequenceEncoder(Module):
    """Shared 1D convolution over the sequence, then a GRU; last state out."""

    def __init__(self, in_dim: int, channels: int, rng: np.random.Generator):
        self.conv = Conv1d(3, in_dim, channels, rng)
        self.gru = GRUCell(channels, channels, rng)

    def __call__(self, feats: np.ndarray, mask: np.ndarray) -> Tensor:
        return run_gru(self.gru, self.conv(T.as_tensor(feats)), mask)

    def flops(self, batch: int, t: int) -> int:
        return self.conv.flops(batch, t) + gru_flops(self.gru, batch, t)


class SceneEncoder(Module):
    def __init__(self, channels: int = DEFAULT_CHANNELS,
                 rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.channels = channels
        self.lane_seq = SequenceEncoder(POINT_FEATURES, channels, rng)
        self.graph1 = GraphEncoder(channels, rng)
        self.traj_seq = SequenceEncoder(TRACK_FEATURES, channels, rng)
        self.lanes_to_agents = AttentionBlock(channels, rng)
        self.agents_to_agents = AttentionBlock(channels, rng)
        self.target_fuse = Linear(2 * channels, channels, rng)
        self.graph2 = GraphEncoder(channels, rng)


# ---------------------------------------------------------------------------
# input feature construction (plain numpy; model arithmetic starts after)

def lane_point_features(lanelets: list[Lanelet], origin, heading: float):
    """Front-padded (L, P, 4) point features in the target frame plus mask.

    Per point: local x, y and the unit direction of its outgoing segment
    (the last point reuses the incoming one).  Padding rows are zero with a
    zero mask, so a padded batch reproduces per-lanelet truncated encoding
    exactly: the conv sees the same zeros same-padding would supply and the
    GRU skips masked steps.
    """
    counts = np.array([l.num_points for l in lanelets], dtype=np.intp)
    p_max = int(counts.max())
    pts = world_to_frame(
        np.concatenate([l.centerline for l in lanelets]), origin, heading
    )
    bounds = np.concatenate([[0], np.cumsum(counts)])
    point = np.arange(bounds[-1], dtype=np.intp)
    row = np.repeat(np.arange(len(lanelets), dtype=np.intp), counts)
    k = point - bounds[row]
    seg = np.where(k < counts[row] - 1, point, point - 1)
    d = pts[seg + 1] - pts[seg]
    ang = np.arctan2(d[:, 1], d[:, 0])
    col = p_max - counts[row] + k
    feats = np.zeros((len(lanelets), p_max, POINT_FEATURES))
    mask = np.zeros((len(lanelets), p_max))
    feats[row, col, 0:2] = pts
    feats[row, col, 2] = np.cos(ang)
    feats[row, col, 3] = np.sin(ang)
    mask[row, col] = 1.0
    return feats, mask


def track_point_features(track: AgentTrack):
    """(T, 4) history features in the track's own last-pose frame plus mask.

    Hidden steps are zeroed in every channel so their (meaningless) stored
    values cannot leak into the encoding.
    """
    x, y, yaw = track.last_pose()
    local = world_to_frame(track.xy, np.array([x, y]), yaw)
    rel_yaw = _wrap(track.yaw - yaw)
    feats = np.stack([local[:, 0], local[:, 1], track.speed, rel_yaw], axis=1)
    feats = feats * track.mask[:, None]
    return feats, track.mask.copy()


def _canonical_lane_order(graph: LaneGraph) -> np.ndarray:
    return np.argsort([l.id for l in graph.lanelets], kind="stable")


def _canonical_agent_order(agents: list[AgentTrack]) -> np.ndarray:
    keys = np.stack([
        np.concatenate([a.xy.ravel(), a.speed, a.yaw, a.mask]) for a in agents
    ])
    return np.lexsort(keys[:, ::-1].T)


def canonical_edges(graph: LaneGraph, order: np.ndarray):
    """Per-relation (src, dst) index arrays in canonical row numbering.

    A stored pair (i, j) reads "j is <relation>-of i", so features flow from
    j into i's row: src=j, dst=i.  Edge lists are sorted so the aggregation
    order is a function of lanelet ids only, never of input row order.
    """
    pos = np.empty(len(order), dtype=np.intp)
    pos[order] = np.arange(len(order))
    edges = {}
    for kind in RELATION_KINDS:
        pairs = graph.relations.get(kind, [])
        if not pairs:
            continue
        dst = pos[[i for i, _ in pairs]]
        src = pos[[j for _, j in pairs]]
        by = np.lexsort((src, dst))
        edges[kind] = (src[by], dst[by])
    return edges


def _invert(order: np.ndarray) -> np.ndarray:
    inv = np.empty(len(order), dtype=np.intp)
    inv[order] = np.arange(len(order))
    return inv


# ---------------------------------------------------------------------------
# encoding entry points

def encode_track(track: AgentTrack, encoder: SceneEncoder) -> Tensor:
    """Deterministic (C,) feature for one agent history."""
    if track.mask.sum() < 1:
        raise SceneInputError("track has no valid timesteps")
    feats, mask = track_point_features(track)
    return encoder.traj_seq(feats[None, :, :], mask[None, :])[0, :]


def encode_scene(scene: Scene, encoder: SceneEncoder) -> SceneFeatures:
    graph = scene.lane_graph
    if graph.num_lanelets == 0:
        raise SceneInputError("scene has an empty lane graph")
    x, y, heading = scene.target.last_pose()
    origin = np.array([x, y])

    lane_order = _canonical_lane_order(graph)
    agent_order = _canonical_agent_order(scene.agents)
    lanes = [graph.lanelets[i] for i in lane_order]
    agents = [scene.agents[i] for i in agent_order]
    edges = canonical_edges(graph, lane_order)

    feats, mask = lane_point_features(lanes, origin, heading)
    lane_feats = encoder.lane_seq(feats, mask)
    lane_feats = encoder.graph1(lane_feats, edges)

    tfeats = np.stack([track_point_features(a)[0] for a in agents])
    tmask = np.stack([track_point_features(a)[1] for a in agents])
    agent_feats = encoder.traj_seq(tfeats, tmask)

    agent_feats = encoder.lanes_to_agents(agent_feats, lane_feats)
    agent_feats = encoder.agents_to_agents(agent_feats, agent_feats)

    target_canonical = int(_invert(agent_order)[scene.target_index])
    target_row = agent_feats[target_canonical : target_canonical + 1, :]
    fused = T.concat(
        [T.broadcast_rows(target_row, graph.num_lanelets), lane_feats], axis=1
    )
    graph_encoding = encoder.graph2(encoder.target_fuse(fused), edges)

    lane_inv = _invert(lane_order)
    agent_inv = _invert(agent_order)
    return SceneFeatures(
        lane_features=T.gather_rows(lane_feats, lane_inv),
        agent_features=T.gather_rows(agent_feats, agent_inv),
        graph_encoding=T.gather_rows(graph_encoding, lane_inv),
        target_index=scene.target_index,
    )


def encoder_flops(encoder: SceneEncoder, scene: Scene) -> int:
    """Analytic multiply count for one encode_scene call."""
    graph = scene.lane_graph
    L = graph.num_lanelets
    N = len(scene.agents)
    p_max = max(l.num_points for l in graph.lanelets)
    t = scene.horizon.history_steps
    counts = {k: len(v) for k, v in graph.relations.items()}
    return (
        encoder.lane_seq.flops(L, p_max)
        + encoder.graph1.flops(L, counts)
        + encoder.traj_seq.flops(N, t)
        + encoder.lanes_to_agents.flops(N, L)
        + encoder.agents_to_agents.flops(N, N)
        + encoder.target_fuse.flops(L)
        + encoder.graph2.flops(L, counts)
    )
