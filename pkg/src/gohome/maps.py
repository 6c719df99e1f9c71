"""Lanelet graph data model and Frenet-frame geometry.

A lanelet is a macro road segment (roughly 10-20 m) described by an ordered
centerline and a corridor width.  Lanelets are connected through four typed
relations: predecessor, successor, left and right.  All geometry here is
plain float64 numpy; everything is immutable and safe to share between
workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .exceptions import DomainError, MalformedMapError

RELATION_KINDS = ("predecessor", "successor", "left", "right")

# Reciprocal relation pairs: (i, j) in kind <=> (j, i) in _RECIPROCAL[kind].
_RECIPROCAL = {
    "predecessor": "successor",
    "successor": "predecessor",
    "left": "right",
    "right": "left",
}

DEFAULT_LANE_WIDTH = 4.0


class FrenetCoord(NamedTuple):
    """Curvilinear coordinate along a lanelet centerline.

    ``s`` is the longitudinal arclength in meters, ``d`` the signed lateral
    offset (positive to the left of the travel direction).
    """

    s: float
    d: float


@dataclass(frozen=True)
class Lanelet:
    """One lane segment: an ordered centerline polyline plus corridor width."""

    id: int
    centerline: np.ndarray
    width: float = DEFAULT_LANE_WIDTH
    cumulative_arclength: np.ndarray = field(init=False, repr=False)
    _tangents: np.ndarray = field(init=False, repr=False)
    _seg_lengths: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise MalformedMapError(
                f"lanelet {self.id}: centerline needs >= 2 2D points, got shape {pts.shape}"
            )
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0.0):
            raise MalformedMapError(
                f"lanelet {self.id}: duplicate consecutive centerline points"
            )
        if not self.width > 0.0:
            raise MalformedMapError(f"lanelet {self.id}: width must be positive")
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "cumulative_arclength", cum)
        object.__setattr__(self, "_seg_lengths", seg_len)
        object.__setattr__(self, "_tangents", seg / seg_len[:, None])

    @property
    def length(self) -> float:
        return float(self.cumulative_arclength[-1])

    @property
    def num_points(self) -> int:
        return self.centerline.shape[0]

    def segment_curvature(self) -> np.ndarray:
        """Discrete curvature per segment (1/m), signed, left turns positive.

        Computed from the heading change at the vertex closing each segment;
        the last segment carries zero curvature.
        """
        t = self._tangents
        if t.shape[0] == 1:
            return np.zeros(1)
        cross = t[:-1, 0] * t[1:, 1] - t[:-1, 1] * t[1:, 0]
        dot = np.einsum("ij,ij->i", t[:-1], t[1:])
        angle = np.arctan2(cross, dot)
        ds = 0.5 * (self._seg_lengths[:-1] + self._seg_lengths[1:])
        return np.concatenate([angle / ds, [0.0]])


@dataclass(frozen=True)
class LaneGraph:
    """A set of lanelets plus typed index-based adjacency relations."""

    lanelets: list[Lanelet]
    relations: dict[str, list[tuple[int, int]]]

    def __post_init__(self):
        object.__setattr__(self, "lanelets", list(self.lanelets))
        rels = {k: sorted(set(map(tuple, self.relations.get(k, [])))) for k in RELATION_KINDS}
        unknown = set(self.relations) - set(RELATION_KINDS)
        if unknown:
            raise MalformedMapError(f"unknown relation kinds: {sorted(unknown)}")
        n = len(self.lanelets)
        for kind, edges in rels.items():
            for i, j in edges:
                if not (0 <= i < n and 0 <= j < n):
                    raise MalformedMapError(f"{kind} edge ({i}, {j}) out of range for {n} lanelets")
            recip = {(j, i) for i, j in rels[_RECIPROCAL[kind]]}
            if set(edges) != recip:
                raise MalformedMapError(
                    f"{kind} edges are not the transpose of {_RECIPROCAL[kind]} edges"
                )
        object.__setattr__(self, "relations", rels)

    @property
    def num_lanelets(self) -> int:
        return len(self.lanelets)


def build_relations(
    successors: Iterable[tuple[int, int]], lefts: Iterable[tuple[int, int]] = ()
) -> dict[str, list[tuple[int, int]]]:
    """Expand successor/left edge lists into the full reciprocal relation map."""
    succ = sorted(set(map(tuple, successors)))
    left = sorted(set(map(tuple, lefts)))
    return {
        "successor": succ,
        "predecessor": sorted((j, i) for i, j in succ),
        "left": left,
        "right": sorted((j, i) for i, j in left),
    }


def adjacency(graph: LaneGraph, relation: str) -> np.ndarray:
    """Dense (L, L) 0/1 adjacency for one relation kind.

    Row i lists the lanelets related to i, so that ``A @ F`` aggregates
    neighbor features onto each row.
    """
    if relation not in RELATION_KINDS:
        raise DomainError(f"unknown relation kind: {relation!r}")
    n = graph.num_lanelets
    mat = np.zeros((n, n))
    edges = graph.relations[relation]
    if edges:
        idx = np.asarray(edges)
        mat[idx[:, 0], idx[:, 1]] = 1.0
    return mat


def _project_raw(lanelet: Lanelet, p) -> tuple[float, float, float]:
    """Project ``p`` onto the centerline.

    Returns (s_clamped, d_signed, s_raw).  ``s_raw`` extends past the ends
    along the terminal segments, so it can exceed [0, length]; ``d_signed``
    is the euclidean distance to the closest centerline point, positive on
    the left of the travel direction.
    """
    p = np.asarray(p, dtype=np.float64)
    pts = lanelet.centerline
    a = pts[:-1]
    seg = pts[1:] - a
    seg_len = lanelet._seg_lengths
    ap = p[None, :] - a
    t_raw = np.einsum("ij,ij->i", ap, seg) / (seg_len * seg_len)
    t = np.clip(t_raw, 0.0, 1.0)
    foot = a + t[:, None] * seg
    diff = p[None, :] - foot
    d2 = np.einsum("ij,ij->i", diff, diff)
    i = int(np.argmin(d2))
    dist = float(np.sqrt(d2[i]))
    cross = seg[i, 0] * ap[i, 1] - seg[i, 1] * ap[i, 0]
    d = dist if cross >= 0.0 else -dist
    cum = lanelet.cumulative_arclength
    s = float(cum[i] + t[i] * seg_len[i])
    s_raw = s
    if i == 0 and t_raw[0] < 0.0:
        s_raw = float(t_raw[0] * seg_len[0])
    elif i == len(seg_len) - 1 and t_raw[i] > 1.0:
        s_raw = float(cum[i] + t_raw[i] * seg_len[i])
    return s, d, s_raw


def frenet_project(lanelet: Lanelet, p) -> FrenetCoord:
    """Closest-point Frenet coordinates of a world point; s clamped to [0, length]."""
    s, d, _ = _project_raw(lanelet, p)
    return FrenetCoord(s=s, d=d)


def frenet_unproject(lanelet: Lanelet, c: FrenetCoord, extrapolate: bool = False) -> np.ndarray:
    """World point at (s, d): centerline(s) plus d along the local left normal.

    With ``extrapolate`` the terminal segments are extended linearly so s may
    leave [0, length]; otherwise out-of-range s raises ``DomainError``.
    """
    s, d = float(c[0]), float(c[1])
    if not extrapolate and not (-1e-9 <= s <= lanelet.length + 1e-9):
        raise DomainError(f"s={s} outside [0, {lanelet.length}] for lanelet {lanelet.id}")
    pts, tan = _frame_at(lanelet, np.array([s]), extrapolate=extrapolate)
    normal = np.stack([-tan[:, 1], tan[:, 0]], axis=1)
    return (pts + d * normal)[0]


def _frame_at(lanelet: Lanelet, s: np.ndarray, extrapolate: bool) -> tuple[np.ndarray, np.ndarray]:
    """Centerline point and unit tangent at each arclength in ``s`` (vectorized)."""
    cum = lanelet.cumulative_arclength
    s = np.asarray(s, dtype=np.float64)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(cum) - 2)
    if not extrapolate:
        s = np.clip(s, 0.0, lanelet.length)
    local = s - cum[idx]
    a = lanelet.centerline[idx]
    tan = lanelet._tangents[idx]
    return a + local[:, None] * tan, tan


def frenet_frame_grid(
    lanelet: Lanelet, s: np.ndarray, d: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized raster-geometry helper for an (s, d) grid.

    Returns (points (n,2), heading (n,), curvature (n,), within (n,)) where
    ``within`` flags samples with s inside the lanelet extent.  s beyond the
    ends extrapolates along the terminal segments.
    """
    s = np.asarray(s, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    pts, tan = _frame_at(lanelet, s, extrapolate=True)
    normal = np.stack([-tan[:, 1], tan[:, 0]], axis=1)
    heading = np.arctan2(tan[:, 1], tan[:, 0])
    kappa = lanelet.segment_curvature()
    cum = lanelet.cumulative_arclength
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(kappa) - 1)
    within = (s >= 0.0) & (s <= lanelet.length)
    return pts + d[:, None] * normal, heading, kappa[idx], within


def contains(lanelet: Lanelet, p) -> bool:
    """Whether ``p`` lies inside the lanelet corridor polygon.

    Uses the unclamped projection: points longitudinally past the lanelet
    ends are outside even if they are near an end point.
    """
    _, d, s_raw = _project_raw(lanelet, p)
    return 0.0 <= s_raw <= lanelet.length and abs(d) <= 0.5 * lanelet.width


def _interpolate_polyline(pts: np.ndarray, cum: np.ndarray, stations: np.ndarray) -> np.ndarray:
    x = np.interp(stations, cum, pts[:, 0])
    y = np.interp(stations, cum, pts[:, 1])
    return np.stack([x, y], axis=1)


def resample_lanelets(graph: LaneGraph, target_length: float) -> LaneGraph:
    """Split long lanelets into chained pieces of roughly ``target_length``.

    Each piece ends up within [0.5, 1.5] x target (stubs already shorter
    stay whole), chained by successor edges.  Predecessor/successor edges of
    the original attach to the first/last piece; left/right edges connect
    the corresponding end pieces.  Centerlines are re-interpolated uniformly
    at each lanelet's original average point spacing.
    """
    if not target_length > 0.0:
        raise DomainError("target_length must be positive")
    pieces: list[Lanelet] = []
    first_piece: list[int] = []
    last_piece: list[int] = []
    chain_edges: list[tuple[int, int]] = []
    next_id = 0
    for lane in graph.lanelets:
        total = lane.length
        n_pieces = max(1, int(round(total / target_length)))
        spacing = total / (lane.num_points - 1)
        first_piece.append(next_id)
        bounds = np.linspace(0.0, total, n_pieces + 1)
        for k in range(n_pieces):
            lo, hi = bounds[k], bounds[k + 1]
            n_pts = max(2, int(round((hi - lo) / spacing)) + 1)
            stations = np.linspace(lo, hi, n_pts)
            center = _interpolate_polyline(lane.centerline, lane.cumulative_arclength, stations)
            pieces.append(Lanelet(id=next_id, centerline=center, width=lane.width))
            if k > 0:
                chain_edges.append((next_id - 1, next_id))
            next_id += 1
        last_piece.append(next_id - 1)

    succ = list(chain_edges)
    left = []
    for i, j in graph.relations["successor"]:
        succ.append((last_piece[i], first_piece[j]))
    for i, j in graph.relations["left"]:
        left.append((first_piece[i], first_piece[j]))
        left.append((last_piece[i], last_piece[j]))
    return LaneGraph(lanelets=pieces, relations=build_relations(succ, left))


def crop_graph(graph: LaneGraph, center, heading: float, side: float) -> LaneGraph:
    """Restrict a lane graph to the axis-aligned square of the given frame.

    Keeps every lanelet with at least one centerline point inside the
    ``side`` x ``side`` square centered on ``center`` and rotated to
    ``heading``; relations are reindexed, dropping edges that lost an end.
    Lanelet ids are preserved, so cropping commutes with id-keyed lookups.
    """
    if not side > 0.0:
        raise DomainError("crop side must be positive")
    half = 0.5 * side
    keep = []
    if graph.lanelets:
        counts = [len(lane.centerline) for lane in graph.lanelets]
        local = world_to_frame(
            np.concatenate([lane.centerline for lane in graph.lanelets]),
            center,
            heading,
        )
        inside = np.max(np.abs(local), axis=1) <= half
        bounds = np.cumsum([0] + counts)
        keep = [
            i
            for i, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:]))
            if bool(np.any(inside[lo:hi]))
        ]
    index = {old: new for new, old in enumerate(keep)}
    relations = {
        kind: [
            (index[i], index[j])
            for i, j in graph.relations.get(kind, [])
            if i in index and j in index
        ]
        for kind in RELATION_KINDS
    }
    return LaneGraph(
        lanelets=[graph.lanelets[i] for i in keep], relations=relations
    )


def world_to_frame(points: np.ndarray, origin, heading: float) -> np.ndarray:
    """Rigid transform of (N, 2) world points into a local (origin, heading) frame."""
    points = np.asarray(points, dtype=np.float64)
    rel = points - np.asarray(origin, dtype=np.float64)
    c, s = math.cos(heading), math.sin(heading)
    return np.stack([c * rel[..., 0] + s * rel[..., 1],
                     -s * rel[..., 0] + c * rel[..., 1]], axis=-1)


def frame_to_world(points: np.ndarray, origin, heading: float) -> np.ndarray:
    """Inverse of world_to_frame."""
    points = np.asarray(points, dtype=np.float64)
    c, s = math.cos(heading), math.sin(heading)
    x = c * points[..., 0] - s * points[..., 1]
    y = s * points[..., 0] + c * points[..., 1]
    return np.stack([x, y], axis=-1) + np.asarray(origin, dtype=np.float64)
