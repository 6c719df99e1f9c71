"""Decode-cost scaling benchmark: sparse lane rasters vs a dense grid decoder.

Two sweeps on the same generated scenes: output range at fixed resolution,
and pixels-per-meter at fixed range.  Each point records the multiply count
of the ranking-through-projection decode (runtime op counter), its wall
clock, and the analytic cost H*W*C^2 of a dense convolutional decoder that
touches every output pixel.  Results go to a CSV; the plot is drawn from
the CSV alone so it can be regenerated without rerunning the sweep.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, fields
from pathlib import Path

from .encoder import encode_scene
from .exceptions import ConfigError, SceneParseError
from .generator import GeneratorConfig, generate
from .heatmap import select_top_k
from .model import GohomeModel
from .nn import tensor as T

CSV_COLUMNS = (
    "sweep", "output_range", "pixels_per_meter", "grid_pixels",
    "decode_macs", "dense_flops", "seconds",
)


@dataclass(frozen=True)
class BenchPoint:
    """One sweep point, averaged over the benchmark scenes."""

    sweep: str
    output_range: float
    pixels_per_meter: float
    grid_pixels: int
    decode_macs: float
    dense_flops: float
    seconds: float


def _measure(model: GohomeModel, scenes, *, output_range: float,
             input_range: float, top_k) -> tuple[float, float, int]:
    """Mean (decode multiplies, seconds) and the grid pixel count."""
    total_ops = 0
    total_sec = 0.0
    pixels = 0
    for scene in scenes:
        cropped = model.cropped_scene(scene, input_range)
        grid = model.output_grid(scene, output_range)
        lanelets = cropped.lane_graph.lanelets
        with T.no_grad():
            feats = encode_scene(cropped, model.encoder)
            start = time.perf_counter()
            with T.recording() as ops:
                _, ranked = model.decoder.rank_lanes(feats.graph_encoding, lanelets)
                k = len(lanelets) if top_k is None else top_k
                ids = select_top_k(ranked, k)
                model.decoder.decode(feats.graph_encoding, lanelets, grid, ids)
            total_sec += time.perf_counter() - start
        total_ops += ops.total
        pixels = grid.num_pixels
    n = len(scenes)
    return total_ops / n, total_sec / n, pixels


def run_bench(*, ranges=(96.0, 192.0, 384.0), pixels_per_meter=(1.0, 2.0, 4.0),
              num_scenes: int = 3, channels: int = 64,
              input_range: float = 128.0, top_k=20,
              seed: int = 0) -> list[BenchPoint]:
    """Run both sweeps and return one BenchPoint per configuration.

    The range sweep holds resolution at 2 px/m; the resolution sweep holds
    the output range at 192 m.  Model weights are freshly seeded; the
    decode multiply count does not depend on their values.
    """
    if num_scenes < 1:
        raise ConfigError("bench needs at least one scene")
    if not ranges or not pixels_per_meter:
        raise ConfigError("bench sweeps must be non-empty")
    scenes = generate(GeneratorConfig(seed=seed, num_scenes=num_scenes))
    horizon = scenes[0].horizon
    points = []

    base_ppm = 2.0
    model = GohomeModel(channels=channels, history_steps=horizon.history_steps,
                        future_steps=horizon.future_steps,
                        resolution=1.0 / base_ppm, seed=seed)
    for rng_m in ranges:
        macs, sec, pixels = _measure(model, scenes, output_range=float(rng_m),
                                     input_range=input_range, top_k=top_k)
        points.append(BenchPoint("output_range", float(rng_m), base_ppm, pixels,
                                 macs, float(pixels) * channels ** 2, sec))

    base_range = 192.0
    for ppm in pixels_per_meter:
        model = GohomeModel(channels=channels, history_steps=horizon.history_steps,
                            future_steps=horizon.future_steps,
                            resolution=1.0 / float(ppm), seed=seed)
        macs, sec, pixels = _measure(model, scenes, output_range=base_range,
                                     input_range=input_range, top_k=top_k)
        points.append(BenchPoint("pixels_per_meter", base_range, float(ppm), pixels,
                                 macs, float(pixels) * channels ** 2, sec))
    return points


# ---------------------------------------------------------------------------
# CSV and plot

def write_bench_csv(points: list[BenchPoint], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for p in points:
            writer.writerow([getattr(p, f.name) for f in fields(BenchPoint)])


def read_bench_csv(path) -> list[BenchPoint]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SceneParseError(f"cannot read benchmark CSV: {exc}", location=str(path))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise SceneParseError("unrecognized benchmark CSV header", location=str(path))
    points = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise SceneParseError(f"row {i} has {len(row)} fields", location=str(path))
        try:
            points.append(BenchPoint(
                sweep=row[0], output_range=float(row[1]),
                pixels_per_meter=float(row[2]), grid_pixels=int(row[3]),
                decode_macs=float(row[4]), dense_flops=float(row[5]),
                seconds=float(row[6]),
            ))
        except ValueError as exc:
            raise SceneParseError(f"row {i}: {exc}", location=str(path))
    return points


def plot_bench_csv(csv_path, plot_path) -> None:
    """Log-log cost curves drawn purely from the CSV contents."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    points = read_bench_csv(csv_path)
    panels = (
        ("output_range", "output range (m)", lambda p: p.output_range),
        ("pixels_per_meter", "pixels per meter", lambda p: p.pixels_per_meter),
    )
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, (sweep, xlabel, key) in zip(axes, panels):
        rows = sorted((p for p in points if p.sweep == sweep), key=key)
        if not rows:
            ax.set_visible(False)
            continue
        xs = [key(p) for p in rows]
        ax.plot(xs, [p.decode_macs for p in rows], "o-", label="sparse decode multiplies")
        ax.plot(xs, [p.dense_flops for p in rows], "s--", label="dense decoder H*W*C^2")
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("operations")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.tight_layout()
    plot_path = Path(plot_path)
    plot_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(plot_path, dpi=120)
    plt.close(fig)
