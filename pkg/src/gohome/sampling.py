"""Greedy miss-rate-optimized endpoint sampling and heatmap ensembling.

Each sampling iteration scores every pixel by the total heatmap mass within
world radius r of its center, takes the best pixel (row-major lowest index on
ties), then zeroes that neighborhood so the next pick must cover new mass.
Neighborhood sums are recomputed from scratch every iteration, adding shifted
copies of the grid in a fixed (dy, dx) offset order; the order is part of the
contract, since float sums are order-dependent and tests require exact
agreement with a reference implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, GridAlignmentError
from .heatmap import HeatmapGrid

SAMPLING_RADII = {"argoverse": 1.8, "long_horizon": 2.6, "low_noise": 1.4}


def disk_offsets(radius_m: float, resolution: float) -> np.ndarray:
    """Integer (dy, dx) pixel offsets within world distance radius_m, sorted."""
    if radius_m <= 0 or resolution <= 0:
        raise DomainError("radius and resolution must be positive")
    r_px = int(np.floor(radius_m / resolution))
    span = np.arange(-r_px, r_px + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    keep = (dx * dx + dy * dy) * resolution * resolution <= radius_m * radius_m
    return np.stack([dy[keep], dx[keep]], axis=1)  # row-major: sorted (dy, dx)


@dataclass(frozen=True)
class EndpointSet:
    """k sampled endpoints in selection order with their aggregated mass."""

    endpoints: np.ndarray   # (k, 2) world coordinates of selected pixel centers
    masses: np.ndarray      # (k,) neighborhood mass at selection time
    pixels: np.ndarray      # (k, 2) integer (row, col)
    radius: float
    degenerate: bool = False  # all-zero input heatmap; endpoints sit at grid center


def sample_endpoints(heatmap: HeatmapGrid, k: int, r: float) -> EndpointSet:
    """Greedy coverage sampling of ``k`` endpoints with radius ``r`` meters.

    Invariant under positive rescaling of the heatmap.  An all-zero heatmap
    yields the degenerate flag and k copies of the grid center; a heatmap
    exhausted before k picks repeats the last selection.
    """
    if heatmap.values is None:
        raise DomainError("heatmap has no values to sample")
    if k < 1:
        raise DomainError("k must be >= 1")
    grid = heatmap.values.copy()
    if grid.min() < 0.0:
        raise DomainError("heatmap values must be non-negative")
    offsets = disk_offsets(r, heatmap.resolution)
    h, w = grid.shape

    if not np.any(grid != 0.0):
        center = heatmap.center
        return EndpointSet(
            endpoints=np.tile(center, (k, 1)),
            masses=np.zeros(k),
            pixels=np.tile([[h // 2, w // 2]], (k, 1)),
            radius=r,
            degenerate=True,
        )

    picks, masses = [], []
    for _ in range(k):
        if picks and not np.any(grid != 0.0):
            picks.append(picks[-1])
            masses.append(0.0)
            continue
        sums = np.zeros((h, w))
        for dy, dx in offsets:
            src_y = slice(max(0, -dy), min(h, h - dy))
            src_x = slice(max(0, -dx), min(w, w - dx))
            dst_y = slice(max(0, dy), min(h, h + dy))
            dst_x = slice(max(0, dx), min(w, w + dx))
            sums[dst_y, dst_x] += grid[src_y, src_x]
        flat = int(np.argmax(sums))  # first maximum in row-major order
        by, bx = divmod(flat, w)
        picks.append((by, bx))
        masses.append(float(sums[by, bx]))
        ys, xs = by + offsets[:, 0], bx + offsets[:, 1]
        ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        grid[ys[ok], xs[ok]] = 0.0

    pixels = np.asarray(picks, dtype=np.intp)
    endpoints = heatmap.pixel_centers(pixels[:, 0], pixels[:, 1])
    return EndpointSet(
        endpoints=endpoints, masses=np.asarray(masses), pixels=pixels, radius=r
    )


def ensemble_heatmaps(grids: list[HeatmapGrid], weights=None) -> HeatmapGrid:
    """Pixel-wise weighted mean of heatmaps on identical grids.

    Weights are normalized to sum 1; identical inputs come back unchanged
    regardless of weighting (the mean is anchored on the first heatmap, so
    zero differences stay exactly zero).
    """
    if not grids:
        raise DomainError("nothing to ensemble")
    if weights is None:
        weights = np.ones(len(grids))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(grids),):
        raise DomainError(f"{len(grids)} heatmaps but {weights.size} weights")
    if weights.min() < 0.0 or weights.sum() <= 0.0:
        raise DomainError("weights must be non-negative and sum > 0")
    first = grids[0]
    if first.values is None:
        raise DomainError("heatmap has no values to ensemble")
    for g in grids[1:]:
        if not first.same_geometry(g):
            raise GridAlignmentError("ensemble heatmaps must share grid geometry")
        if g.values is None:
            raise DomainError("heatmap has no values to ensemble")

    total = weights.sum()
    out = first.values.copy()
    for g, w_i in zip(grids[1:], weights[1:]):
        out += (w_i / total) * (g.values - first.values)
    return first.with_values(np.clip(out, 0.0, 1.0))
