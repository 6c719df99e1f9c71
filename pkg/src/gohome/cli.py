"""Command-line entry point: generate | train | predict | eval | ensemble | bench.

Every command reads one optional JSON config file plus repeated
``--set section.key=value`` overrides.  Exit codes: 0 success, 2 config
or validation error, 3 I/O or file-format error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import plot_bench_csv, run_bench, write_bench_csv
from .config import resolve_config
from .exceptions import (
    ConfigError,
    GohomeError,
    NumericsError,
    SceneParseError,
)
from .generator import GeneratorConfig, generate
from .heatmap import load_heatmap, save_heatmap
from .metrics import ScenePrediction, evaluate, load_predictions, save_predictions
from .model import GohomeModel, load_model, predict_scene
from .sampling import ensemble_heatmaps, sample_endpoints
from .scenes import Horizon, Scene, load_dataset, save_dataset, split_scenes
from .training import TrainConfig, train
from .trajectory import decode_trajectories

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

log = logging.getLogger("gohome")


def _require(cfg: dict, section: str, key: str):
    value = cfg[section][key]
    if value is None:
        raise ConfigError(f"{section}.{key} is required")
    return value


def _load_split(cfg: dict, section: str) -> list[Scene]:
    root = _require(cfg, section, "data")
    scenes = load_dataset(root, cfg[section]["split"])
    return sorted(scenes, key=lambda s: s.scene_id)


def _write_json(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


# ---------------------------------------------------------------------------
# commands

def _cmd_generate(cfg: dict) -> int:
    g = cfg["generate"]
    out = _require(cfg, "generate", "out")
    gen_cfg = GeneratorConfig(
        seed=g["seed"], num_scenes=g["num_scenes"],
        template_mix=tuple(g["template_mix"]),
        speed_range=tuple(g["speed_range"]),
        lateral_noise_sigma=g["lateral_noise_sigma"],
        lane_change_probability=g["lane_change_probability"],
        horizon=Horizon(g["history_steps"], g["future_steps"], g["dt"]),
    )
    scenes = generate(gen_cfg)
    train_scenes, val_scenes = split_scenes(scenes, g["train_fraction"], g["split_seed"])
    save_dataset({"train": train_scenes, "val": val_scenes}, out)
    print(f"wrote {len(train_scenes)} train / {len(val_scenes)} val scenes to {out}")
    return EXIT_OK


def _cmd_train(cfg: dict) -> int:
    t = cfg["train"]
    data = _require(cfg, "train", "data")
    out = _require(cfg, "train", "out")
    train_scenes = load_dataset(data, "train")
    try:
        val_scenes = load_dataset(data, "val")
    except SceneParseError:
        val_scenes = None
    horizon = train_scenes[0].horizon if train_scenes else Horizon()
    model = GohomeModel(
        channels=cfg["model"]["channels"],
        history_steps=horizon.history_steps,
        future_steps=horizon.future_steps,
        resolution=cfg["model"]["resolution"],
        seed=t["seed"],
    )
    train_cfg = TrainConfig(
        epochs=t["epochs"], batch_scenes=t["batch_scenes"], lr=t["lr"],
        lr_drop_epochs=tuple(t["lr_drop_epochs"]),
        input_range=t["input_range"], output_range=t["output_range"],
        top_k=t["top_k"], sigma=t["sigma"],
        ranking_weight=t["ranking_weight"], radius=t["radius"],
        num_endpoints=t["num_endpoints"], val_probe=t["val_probe"],
        seed=t["seed"],
    )
    history = train(model, train_scenes, val_scenes, train_cfg, checkpoint_dir=out)
    _write_json(Path(out) / "history.json", {"epochs": history})
    print(f"trained {train_cfg.epochs} epochs; checkpoints in {out}")
    return EXIT_OK


def _cmd_predict(cfg: dict) -> int:
    p = cfg["predict"]
    model = load_model(_require(cfg, "predict", "checkpoint"))
    out = Path(_require(cfg, "predict", "out"))
    scenes = _load_split(cfg, "predict")
    heat_dir = out / "heatmaps"
    heat_dir.mkdir(parents=True, exist_ok=True)
    predictions = []
    for scene in scenes:
        pred, heat, _ = predict_scene(
            model, scene,
            output_range=p["output_range"], input_range=p["input_range"],
            top_k=p["top_k"], num_endpoints=p["num_endpoints"], radius=p["radius"],
        )
        predictions.append(pred)
        save_heatmap(heat, heat_dir / f"{scene.scene_id}.pgm")
    save_predictions(predictions, out / "predictions.jsonl")
    print(f"wrote {len(predictions)} predictions and heatmaps to {out}")
    return EXIT_OK


def _metric_report(cfg: dict, section: str, predictions: list[ScenePrediction],
                   scenes: list[Scene]):
    by_id = {s.scene_id: s for s in scenes}
    missing = [p.scene_id for p in predictions if p.scene_id not in by_id]
    if missing:
        raise SceneParseError(f"predictions without scenes: {missing[:5]}")
    gts = [by_id[p.scene_id].gt_future for p in predictions]
    return evaluate(predictions, gts, ks=tuple(cfg[section]["ks"]),
                    threshold=cfg[section]["threshold"])


def _cmd_eval(cfg: dict) -> int:
    predictions = load_predictions(_require(cfg, "eval", "predictions"))
    scenes = _load_split(cfg, "eval")
    report = _metric_report(cfg, "eval", predictions, scenes)
    print(report.table())
    if cfg["eval"]["out"] is not None:
        _write_json(cfg["eval"]["out"], report.to_dict())
    return EXIT_OK


def _linear_trajectories(scene: Scene, endpoints: np.ndarray) -> np.ndarray:
    """Straight-line fallback when no checkpoint provides the trajectory head."""
    steps = scene.horizon.future_steps
    x, y, _ = scene.target.last_pose()
    start = np.array([x, y])
    frac = (np.arange(steps, dtype=np.float64) + 1.0) / steps
    return start + frac[None, :, None] * (endpoints[:, None, :] - start)


def _cmd_ensemble(cfg: dict) -> int:
    e = cfg["ensemble"]
    runs = e["runs"]
    if not runs:
        raise ConfigError("ensemble.runs must list at least one prediction directory")
    model = load_model(e["checkpoint"]) if e["checkpoint"] is not None else None
    scenes = _load_split(cfg, "ensemble")
    predictions = []
    for scene in scenes:
        grids = [load_heatmap(Path(run) / "heatmaps" / f"{scene.scene_id}.pgm")
                 for run in runs]
        merged = ensemble_heatmaps(grids, e["weights"])
        picks = sample_endpoints(merged, e["num_endpoints"], e["radius"])
        if model is not None:
            trajs = np.stack([
                t.waypoints
                for t in decode_trajectories(scene.target, picks.endpoints,
                                             model.trajectory)
            ])
        else:
            trajs = _linear_trajectories(scene, picks.endpoints)
        predictions.append(ScenePrediction(
            scene_id=scene.scene_id, endpoints=picks.endpoints,
            masses=picks.masses, trajectories=trajs,
        ))
    report = _metric_report(cfg, "ensemble", predictions, scenes)
    print(report.table())
    if e["out"] is not None:
        _write_json(e["out"], report.to_dict())
    return EXIT_OK


def _cmd_bench(cfg: dict) -> int:
    b = cfg["bench"]
    out = Path(_require(cfg, "bench", "out"))
    points = run_bench(
        ranges=tuple(b["ranges"]), pixels_per_meter=tuple(b["pixels_per_meter"]),
        num_scenes=b["num_scenes"], channels=b["channels"],
        input_range=b["input_range"], top_k=b["top_k"], seed=b["seed"],
    )
    csv_path = out / "bench.csv"
    write_bench_csv(points, csv_path)
    plot_bench_csv(csv_path, out / "bench.png")
    for p in points:
        print(f"{p.sweep:>16} range={p.output_range:6.1f} ppm={p.pixels_per_meter:4.1f} "
              f"decode={p.decode_macs:14.0f} dense={p.dense_flops:16.0f} "
              f"wall={p.seconds:.4f}s")
    print(f"wrote {csv_path} and {out / 'bench.png'}")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "ensemble": _cmd_ensemble,
    "bench": _cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gohome",
        description="Lane-graph trajectory prediction toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="JSON config file")
        cmd.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="SECTION.KEY=VALUE",
                         help="override one config key (value parsed as JSON)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    try:
        cfg = resolve_config(args.config, args.overrides)
        return _COMMANDS[args.command](cfg)
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SceneParseError, OSError) as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except GohomeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
