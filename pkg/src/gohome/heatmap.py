"""Lane ranking, curvilinear lane rasters, and the cartesian output heatmap.

The decoder works per lanelet instead of per output pixel: each candidate
lanelet gets a small curvilinear raster (20 m x 4 m in its own Frenet frame)
whose learned features are a rank-1 sum of a longitudinal and a lateral
component, so building the feature volume costs (h+w)*8*C multiplies rather
than h*w*8*C.  Raster probabilities are then scattered into the world-aligned
output grid, averaging wherever rasters overlap.  Pixels no raster touches
stay exactly zero, which keeps decode cost a function of the number of
rasters, not of the output resolution.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (
    DomainError,
    GridAlignmentError,
    SceneParseError,
    ShapeMismatchError,
    TargetOutsideGridError,
)
from .maps import Lanelet, contains, frenet_frame_grid
from .nn import tensor as T
from .nn.layers import Linear, Module
from .nn.tensor import Tensor

logger = logging.getLogger(__name__)

RASTER_LENGTH = 20.0
RASTER_WIDTH = 4.0
FEATURE_CHANNELS = 8
GEOMETRIC_CHANNELS = 5  # grid x, grid y, relative heading, past-end flag, curvature
PROBA_EPS = 1e-7


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    out = np.mod(-a + math.pi, 2.0 * math.pi)
    return -(out - math.pi)


# ---------------------------------------------------------------------------
# output grid

@dataclass(frozen=True)
class HeatmapGrid:
    """World-aligned square output grid.

    ``origin`` is the world position of the corner of pixel (0, 0);
    ``orientation`` rotates grid +x into the world frame.  Rows index the
    grid's lateral (+y) axis, columns its longitudinal (+x) axis.
    """

    H: int
    W: int
    resolution: float
    origin: np.ndarray
    orientation: float
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.H <= 0 or self.W <= 0 or self.resolution <= 0:
            raise DomainError("grid needs positive H, W, resolution")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        if self.origin.shape != (2,):
            raise ShapeMismatchError(f"grid origin must be (2,), got {self.origin.shape}")
        if self.values is not None:
            vals = np.asarray(self.values, dtype=np.float64)
            if vals.shape != (self.H, self.W):
                raise ShapeMismatchError(
                    f"grid values must be ({self.H}, {self.W}), got {vals.shape}"
                )
            if vals.min() < 0.0 or vals.max() > 1.0:
                raise DomainError("grid values must lie in [0, 1]")
            object.__setattr__(self, "values", vals)

    @classmethod
    def centered(cls, center, heading: float, output_range: float, resolution: float):
        """Square grid of side ``output_range`` centered on ``center``."""
        n = int(round(output_range / resolution))
        half_x, half_y = 0.5 * n * resolution, 0.5 * n * resolution
        c, s = math.cos(heading), math.sin(heading)
        center = np.asarray(center, dtype=np.float64)
        origin = center - np.array([c * half_x - s * half_y, s * half_x + c * half_y])
        return cls(H=n, W=n, resolution=resolution, origin=origin, orientation=heading)

    @property
    def num_pixels(self) -> int:
        return self.H * self.W

    @property
    def center(self) -> np.ndarray:
        return self.grid_to_world(
            np.array([[0.5 * self.W * self.resolution, 0.5 * self.H * self.resolution]])
        )[0]

    def world_to_grid(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        rel = points - self.origin
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        return np.stack([c * rel[:, 0] + s * rel[:, 1], -s * rel[:, 0] + c * rel[:, 1]], axis=1)

    def grid_to_world(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64)
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        x = c * coords[:, 0] - s * coords[:, 1]
        y = s * coords[:, 0] + c * coords[:, 1]
        return np.stack([x, y], axis=1) + self.origin

    def point_to_index(self, points: np.ndarray):
        """(rows, cols, inbounds) of the pixels containing ``points``."""
        g = self.world_to_grid(points)
        cols = np.floor(g[:, 0] / self.resolution).astype(np.intp)
        rows = np.floor(g[:, 1] / self.resolution).astype(np.intp)
        ok = (rows >= 0) & (rows < self.H) & (cols >= 0) & (cols < self.W)
        return rows, cols, ok

    def pixel_centers(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        coords = np.stack(
            [(np.asarray(cols) + 0.5) * self.resolution,
             (np.asarray(rows) + 0.5) * self.resolution],
            axis=1,
        )
        return self.grid_to_world(coords)

    def all_pixel_centers(self) -> np.ndarray:
        rows, cols = np.divmod(np.arange(self.num_pixels), self.W)
        return self.pixel_centers(rows, cols)

    def with_values(self, values: np.ndarray) -> "HeatmapGrid":
        return replace(self, values=values)

    def same_geometry(self, other: "HeatmapGrid") -> bool:
        return (
            self.H == other.H
            and self.W == other.W
            and self.resolution == other.resolution
            and bool(np.all(self.origin == other.origin))
            and self.orientation == other.orientation
        )


# ---------------------------------------------------------------------------
# per-lanelet results

@dataclass
class LaneScore:
    lanelet_id: int
    score: float
    label: int | None = None


@dataclass
class LaneRaster:
    """Curvilinear raster for one lanelet, row-major over (h, w) pixels."""

    lanelet_id: int
    h: int
    w: int
    features: Tensor          # (h*w, 8) learned rank-1 features
    geo: Tensor               # (h*w, 5) geometric channels, constant
    world: np.ndarray         # (h*w, 2) pixel-center world coordinates
    connected: Tensor | None = None  # (h*w, 8) gathered cartesian context
    proba: Tensor | None = None      # (h*w, 1) per-pixel probability

    @property
    def features_hw(self) -> np.ndarray:
        return self.features.data.reshape(self.h, self.w, FEATURE_CHANNELS)

    @property
    def proba_hw(self) -> np.ndarray:
        if self.proba is None:
            raise DomainError("raster probabilities not computed yet")
        return self.proba.data.reshape(self.h, self.w)


def lane_labels(lanelets: list[Lanelet], gt_position: np.ndarray) -> np.ndarray:
    """1.0 for lanelets whose corridor contains the ground-truth position."""
    gt = np.asarray(gt_position, dtype=np.float64)
    return np.array([1.0 if contains(l, gt) else 0.0 for l in lanelets])


# ---------------------------------------------------------------------------
# decoder

class HeatmapDecoder(Module):
    """Lane scores, rank-1 rasters, cartesian connection, per-pixel head."""

    def __init__(self, dim: int, rng: np.random.Generator, resolution: float = 0.5,
                 raster_length: float = RASTER_LENGTH, raster_width: float = RASTER_WIDTH):
        if resolution <= 0:
            raise DomainError("resolution must be positive")
        self.dim = dim
        self.resolution = resolution
        self.h = int(round(raster_length / resolution))
        self.w = int(round(raster_width / resolution))
        if self.h < 1 or self.w < 1:
            raise DomainError("raster must be at least one pixel in each direction")
        self.score_head = Linear(dim, 1, rng)
        self.long_head = Linear(dim, self.h * FEATURE_CHANNELS, rng)
        self.lat_head = Linear(dim, self.w * FEATURE_CHANNELS, rng)
        self.connect = Linear(FEATURE_CHANNELS + 1, FEATURE_CHANNELS, rng)
        self.pixel_head = Linear(2 * FEATURE_CHANNELS + GEOMETRIC_CHANNELS, 1, rng)
        # raster pixel centers in the lanelet Frenet frame, row-major
        ii, jj = np.meshgrid(np.arange(self.h), np.arange(self.w), indexing="ij")
        self._s = (ii.ravel() + 0.5) * resolution
        self._d = (jj.ravel() + 0.5) * resolution - 0.5 * raster_width

    # -- ranking ------------------------------------------------------------

    def rank_lanes(self, graph_encoding: Tensor, lanelets: list[Lanelet]):
        """Sigmoid lane scores plus the descending-order score list.

        Returns (scores, ranked): ``scores`` is the (L, 1) tensor aligned with
        the input lanelet order (used by the ranking loss); ``ranked`` sorts
        by score descending with ties broken by lower lanelet id.
        """
        if graph_encoding.shape[0] != len(lanelets):
            raise ShapeMismatchError(
                f"{graph_encoding.shape[0]} encodings for {len(lanelets)} lanelets"
            )
        scores = T.sigmoid(self.score_head(graph_encoding))
        entries = [
            LaneScore(lanelet_id=l.id, score=float(v))
            for l, v in zip(lanelets, scores.data[:, 0])
        ]
        ranked = sorted(entries, key=lambda e: (-e.score, e.lanelet_id))
        return scores, ranked

    # -- rasters ------------------------------------------------------------

    def build_lane_raster(self, lanelet: Lanelet, encoding_row: Tensor,
                          grid: HeatmapGrid) -> LaneRaster:
        """Rank-1 learned features plus geometric channels for one lanelet."""
        if encoding_row.shape != (1, self.dim):
            raise ShapeMismatchError(f"encoding row must be (1, {self.dim}), got {encoding_row.shape}")
        longitudinal = T.reshape(self.long_head(encoding_row), (self.h, FEATURE_CHANNELS))
        lateral = T.reshape(self.lat_head(encoding_row), (self.w, FEATURE_CHANNELS))
        rep = np.repeat(np.arange(self.h), self.w)
        tile = np.tile(np.arange(self.w), self.h)
        features = T.add(T.gather_rows(longitudinal, rep), T.gather_rows(lateral, tile))

        points, heading, curvature, _ = frenet_frame_grid(lanelet, self._s, self._d)
        g = grid.world_to_grid(points)
        half_x = 0.5 * grid.W * grid.resolution
        half_y = 0.5 * grid.H * grid.resolution
        geo = np.stack(
            [
                (g[:, 0] - half_x) / half_x,
                (g[:, 1] - half_y) / half_y,
                _wrap_angle(heading - grid.orientation),
                (self._s > lanelet.length).astype(np.float64),
                np.clip(curvature, -0.5, 0.5),
            ],
            axis=1,
        )
        return LaneRaster(
            lanelet_id=lanelet.id, h=self.h, w=self.w,
            features=features, geo=T.as_tensor(geo), world=points,
        )

    def dense_raster_reference(self, encoding_row: Tensor) -> Tensor:
        """Unfactorized raster features via one (C -> h*w*8) linear map.

        The weight for output pixel (i, j) is the sum of the longitudinal
        weight column i and the lateral weight column j, so this computes the
        same function as the rank-1 path but costs h*w*8*C multiplies.  Used
        only to measure what the broadcast factorization saves.
        """
        wl = self.long_head.W.data.reshape(self.dim, self.h, 1, FEATURE_CHANNELS)
        wt = self.lat_head.W.data.reshape(self.dim, 1, self.w, FEATURE_CHANNELS)
        w_dense = (wl + wt).reshape(self.dim, self.h * self.w * FEATURE_CHANNELS)
        bl = self.long_head.b.data.reshape(self.h, 1, FEATURE_CHANNELS)
        bt = self.lat_head.b.data.reshape(1, self.w, FEATURE_CHANNELS)
        b_dense = (bl + bt).reshape(self.h * self.w * FEATURE_CHANNELS)
        out = T.add(T.matmul(encoding_row, T.as_tensor(w_dense)), T.as_tensor(b_dense))
        return T.reshape(out, (self.h * self.w, FEATURE_CHANNELS))

    # -- cartesian connection -------------------------------------------------

    def cartesian_connection(self, rasters: list[LaneRaster], grid: HeatmapGrid) -> None:
        """Mix raster features through the shared cartesian buffer.

        Scatter-averages every raster's 8 feature channels into the output
        pixels they land on, appends the per-pixel contribution count, runs
        the shared linear layer on the touched pixels only, and gathers the
        result back onto each raster.  Raster pixels outside the grid receive
        zeros.  Work scales with touched pixels, never with H*W.
        """
        if not rasters:
            return
        per_raster = []
        flat_parts, feat_parts = [], []
        for r in rasters:
            rows, cols, ok = grid.point_to_index(r.world)
            idx_in = np.nonzero(ok)[0]
            flat = rows[idx_in] * grid.W + cols[idx_in]
            per_raster.append((idx_in, flat))
            flat_parts.append(flat)
            feat_parts.append(T.gather_rows(r.features, idx_in))
        all_flat = np.concatenate(flat_parts)
        touched, inverse = np.unique(all_flat, return_inverse=True)
        n_touched = len(touched)

        stacked = T.concat(feat_parts, axis=0)
        buffer = T.scatter_mean(stacked, inverse, n_touched)
        counts = np.bincount(inverse, minlength=n_touched).astype(np.float64)
        mixed = self.connect(T.concat([buffer, T.as_tensor(counts[:, None])], axis=1))
        padded = T.concat([mixed, T.as_tensor(np.zeros((1, FEATURE_CHANNELS)))], axis=0)

        for r, (idx_in, flat) in zip(rasters, per_raster):
            pos = np.full(r.h * r.w, n_touched, dtype=np.intp)
            pos[idx_in] = np.searchsorted(touched, flat)
            r.connected = T.gather_rows(padded, pos)

    # -- per-pixel head --------------------------------------------------------

    def finalize_proba(self, raster: LaneRaster) -> Tensor:
        if raster.connected is None:
            raise DomainError("run cartesian_connection before finalize_proba")
        x = T.concat([raster.features, raster.geo, raster.connected], axis=1)
        raster.proba = T.sigmoid(self.pixel_head(x))
        return raster.proba

    def decode(self, graph_encoding: Tensor, lanelets: list[Lanelet],
               grid: HeatmapGrid, ids):
        """Full raster pipeline for the lanelets named by ``ids``.

        Returns (heatmap grid, heatmap tensor, rasters).  Rasters are built
        in ascending lanelet id order, which fixes the projection's
        accumulation order.

        Computes the same values as composing build_lane_raster,
        cartesian_connection, finalize_proba and project_heatmap, but batches
        every head over all selected lanelets so the tape holds a handful of
        large nodes instead of a dozen per raster.  The returned rasters carry
        views into the batched tensors.
        """
        by_id = {l.id: i for i, l in enumerate(lanelets)}
        sel = []
        for lanelet_id in sorted(ids):
            if lanelet_id not in by_id:
                raise DomainError(f"lanelet id {lanelet_id} not in this graph")
            sel.append(by_id[lanelet_id])
        n_pixels = grid.num_pixels
        if not sel:
            yhat = T.as_tensor(np.zeros((n_pixels, 1)))
            return grid.with_values(np.zeros((grid.H, grid.W))), yhat, []

        num = len(sel)
        hw = self.h * self.w
        rows_enc = T.gather_rows(graph_encoding, np.asarray(sel, dtype=np.intp))
        long_all = T.reshape(self.long_head(rows_enc), (num * self.h, FEATURE_CHANNELS))
        lat_all = T.reshape(self.lat_head(rows_enc), (num * self.w, FEATURE_CHANNELS))
        rep = np.repeat(np.arange(self.h), self.w)
        tile = np.tile(np.arange(self.w), self.h)
        block = np.arange(num)[:, None]
        features = T.add(
            T.gather_rows(long_all, (block * self.h + rep[None, :]).ravel()),
            T.gather_rows(lat_all, (block * self.w + tile[None, :]).ravel()),
        )

        half_x = 0.5 * grid.W * grid.resolution
        half_y = 0.5 * grid.H * grid.resolution
        geo_parts, world_parts, inside_parts, flat_parts = [], [], [], []
        for r, i in enumerate(sel):
            lanelet = lanelets[i]
            points, heading, curvature, _ = frenet_frame_grid(lanelet, self._s, self._d)
            g = grid.world_to_grid(points)
            geo_parts.append(np.stack(
                [
                    (g[:, 0] - half_x) / half_x,
                    (g[:, 1] - half_y) / half_y,
                    _wrap_angle(heading - grid.orientation),
                    (self._s > lanelet.length).astype(np.float64),
                    np.clip(curvature, -0.5, 0.5),
                ],
                axis=1,
            ))
            world_parts.append(points)
            rows_g, cols_g, ok = grid.point_to_index(points)
            idx_in = np.nonzero(ok)[0]
            inside_parts.append(r * hw + idx_in)
            flat_parts.append(rows_g[idx_in] * grid.W + cols_g[idx_in])
        geo = T.as_tensor(np.concatenate(geo_parts))
        inside = np.concatenate(inside_parts)
        all_flat = np.concatenate(flat_parts)

        # cartesian connection over every raster at once
        touched, inverse = np.unique(all_flat, return_inverse=True)
        n_touched = len(touched)
        buffer = T.scatter_mean(T.gather_rows(features, inside), inverse, n_touched)
        counts = np.bincount(inverse, minlength=n_touched).astype(np.float64)
        mixed = self.connect(T.concat([buffer, T.as_tensor(counts[:, None])], axis=1))
        padded = T.concat([mixed, T.as_tensor(np.zeros((1, FEATURE_CHANNELS)))], axis=0)
        pos = np.full(num * hw, n_touched, dtype=np.intp)
        pos[inside] = np.searchsorted(touched, all_flat)
        connected = T.gather_rows(padded, pos)

        proba = T.sigmoid(self.pixel_head(T.concat([features, geo, connected], axis=1)))

        # projection, averaging overlaps in the same ascending-id order
        if len(all_flat) == 0:
            yhat = T.as_tensor(np.zeros((n_pixels, 1)))
            heat = grid.with_values(np.zeros((grid.H, grid.W)))
        else:
            meaned = T.scatter_mean(T.gather_rows(proba, inside), inverse, n_touched)
            padded_p = T.concat([meaned, T.as_tensor(np.zeros((1, 1)))], axis=0)
            pos_p = np.full(n_pixels, n_touched, dtype=np.intp)
            pos_p[touched] = np.arange(n_touched)
            yhat = T.gather_rows(padded_p, pos_p)
            heat = grid.with_values(yhat.data.reshape(grid.H, grid.W))

        rasters = []
        for r, i in enumerate(sel):
            rows = slice(r * hw, (r + 1) * hw)
            rasters.append(LaneRaster(
                lanelet_id=lanelets[i].id, h=self.h, w=self.w,
                features=T.slice_view(features, rows),
                geo=T.as_tensor(geo_parts[r]),
                world=world_parts[r],
                connected=T.slice_view(connected, rows),
                proba=T.slice_view(proba, rows),
            ))
        return heat, yhat, rasters

    def raster_flops(self) -> int:
        """Analytic multiply count of one raster's broadcast feature build."""
        return (self.h + self.w) * FEATURE_CHANNELS * self.dim

    def dense_raster_flops(self) -> int:
        return self.h * self.w * FEATURE_CHANNELS * self.dim


def select_top_k(ranked: list[LaneScore], k: int) -> list[int]:
    """Ids of the k best-scored lanelets (all of them if k >= L)."""
    if k < 1:
        raise DomainError("k must be >= 1")
    return [e.lanelet_id for e in ranked[:k]]


# ---------------------------------------------------------------------------
# projection and targets

def project_heatmap(rasters: list[LaneRaster], grid: HeatmapGrid):
    """Scatter raster probabilities into the output grid, averaging overlaps.

    Deterministic reduction order: rasters sorted by lanelet id, pixels
    row-major within each raster.  Returns (grid with values, (H*W, 1)
    heatmap tensor); pixels no raster touches are exactly zero.
    """
    rasters = sorted(rasters, key=lambda r: r.lanelet_id)
    flat_parts, val_parts = [], []
    for r in rasters:
        if r.proba is None:
            raise DomainError("raster probabilities not computed yet")
        rows, cols, ok = grid.point_to_index(r.world)
        idx_in = np.nonzero(ok)[0]
        flat_parts.append(rows[idx_in] * grid.W + cols[idx_in])
        val_parts.append(T.gather_rows(r.proba, idx_in))

    n_pixels = grid.num_pixels
    if not flat_parts or sum(len(f) for f in flat_parts) == 0:
        yhat = T.as_tensor(np.zeros((n_pixels, 1)))
        return grid.with_values(np.zeros((grid.H, grid.W))), yhat

    all_flat = np.concatenate(flat_parts)
    touched, inverse = np.unique(all_flat, return_inverse=True)
    meaned = T.scatter_mean(T.concat(val_parts, axis=0), inverse, len(touched))
    padded = T.concat([meaned, T.as_tensor(np.zeros((1, 1)))], axis=0)
    pos = np.full(n_pixels, len(touched), dtype=np.intp)
    pos[touched] = np.arange(len(touched))
    yhat = T.gather_rows(padded, pos)
    return grid.with_values(yhat.data.reshape(grid.H, grid.W)), yhat


def target_heatmap(gt_position, grid: HeatmapGrid, sigma: float = 1.0) -> np.ndarray:
    """Gaussian around the ground-truth position over pixel centers.

    The pixel containing the ground truth is forced exactly to 1 so the
    positive branch of the focal loss fires.  Raises TargetOutsideGridError
    when the ground truth falls off the grid (callers skip such samples).
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    gt = np.asarray(gt_position, dtype=np.float64)
    rows, cols, ok = grid.point_to_index(gt[None, :])
    if not ok[0]:
        raise TargetOutsideGridError(f"ground truth {gt.tolist()} outside the output grid")
    centers = grid.all_pixel_centers()
    d2 = np.sum((centers - gt) ** 2, axis=1)
    target = np.exp(-d2 / (2.0 * sigma * sigma)).reshape(grid.H, grid.W)
    target[rows[0], cols[0]] = 1.0
    return target


# ---------------------------------------------------------------------------
# loss

def combined_loss(yhat: Tensor, target: np.ndarray, lane_scores: Tensor,
                  labels: np.ndarray, ranking_weight: float = 1e-2) -> Tensor:
    """Pixel-wise focal loss plus weighted lane-ranking cross-entropy.

    focal = -(1/P) sum (Y - p)^2 * [log p where Y == 1, else (1-Y)^4 log(1-p)]
    with p clamped 1e-7 away from {0, 1} (exact endpoint values are logged).
    """
    y = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    if yhat.shape != y.shape:
        raise ShapeMismatchError(f"heatmap {yhat.shape} vs target {y.shape}")
    n_boundary = int(np.count_nonzero((yhat.data <= 0.0) | (yhat.data >= 1.0)))
    if n_boundary:
        logger.debug("clamping %d heatmap values away from {0,1}", n_boundary)
    # the clamp only guards the logs; the squared error keeps the raw value
    # so a perfect binary prediction really scores zero
    p = T.clamp(yhat, PROBA_EPS, 1.0 - PROBA_EPS)

    pos = (y == 1.0).astype(np.float64)
    decay = (1.0 - y) ** 4
    diff = T.add(y, T.neg(yhat))
    sq = T.mul(diff, diff)
    term = T.add(
        T.mul(T.log(p), pos),
        T.mul(T.log(T.add(1.0, T.neg(p))), (1.0 - pos) * decay),
    )
    focal = T.neg(T.tmean(T.mul(sq, term)))

    lab = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if lane_scores.shape != lab.shape:
        raise ShapeMismatchError(f"scores {lane_scores.shape} vs labels {lab.shape}")
    s = T.clamp(lane_scores, PROBA_EPS, 1.0 - PROBA_EPS)
    bce_terms = T.add(
        T.mul(T.log(s), lab),
        T.mul(T.log(T.add(1.0, T.neg(s))), 1.0 - lab),
    )
    bce = T.neg(T.tmean(bce_terms))
    return T.add(focal, T.mul(bce, ranking_weight))


# ---------------------------------------------------------------------------
# export

def save_heatmap(grid: HeatmapGrid, path) -> None:
    """16-bit PGM (values * 65535) plus a JSON sidecar with the geometry."""
    from pathlib import Path

    if grid.values is None:
        raise DomainError("grid has no values to export")
    path = Path(path)
    scaled = np.round(grid.values * 65535.0).astype(">u2")
    header = f"P5\n{grid.W} {grid.H}\n65535\n".encode("ascii")
    path.write_bytes(header + scaled.tobytes())
    sidecar = {
        "origin": list(grid.origin),
        "resolution": grid.resolution,
        "orientation": grid.orientation,
        "H": grid.H,
        "W": grid.W,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1), encoding="utf-8")


def load_heatmap(path) -> HeatmapGrid:
    """Read back a PGM + sidecar pair written by save_heatmap."""
    from pathlib import Path

    path = Path(path)
    raw = path.read_bytes()

    # parse the header byte-by-byte: exactly one whitespace byte follows the
    # maxval, and the first pixel byte may itself look like whitespace
    def token(pos):
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        return raw[start:pos], pos

    magic, pos = token(0)
    w_tok, pos = token(pos)
    h_tok, pos = token(pos)
    maxval, pos = token(pos)
    if magic != b"P5" or maxval != b"65535":
        raise SceneParseError("not a 16-bit PGM heatmap", location=str(path))
    w, h = int(w_tok), int(h_tok)
    pixels = np.frombuffer(raw, dtype=">u2", count=h * w, offset=pos + 1).astype(np.float64)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    return HeatmapGrid(
        H=meta["H"], W=meta["W"], resolution=meta["resolution"],
        origin=np.asarray(meta["origin"]), orientation=meta["orientation"],
        values=(pixels / 65535.0).reshape(h, w),
    )


def merge_heatmaps(grids: list[HeatmapGrid]) -> HeatmapGrid:
    """Pixel-wise average of heatmaps sharing identical geometry."""
    if not grids:
        raise DomainError("nothing to merge")
    first = grids[0]
    for g in grids[1:]:
        if not first.same_geometry(g):
            raise GridAlignmentError("ensemble heatmaps must share grid geometry")
        if g.values is None:
            raise DomainError("grid has no values to merge")
    if first.values is None:
        raise DomainError("grid has no values to merge")
    stacked = np.stack([g.values for g in grids])
    return first.with_values(stacked.mean(axis=0))
