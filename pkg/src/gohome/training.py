"""Training loop for the full predictor.

Gradients accumulate over a batch of scenes (one forward/backward per scene,
grads averaged before the optimizer step), the learning rate follows a fixed
halving schedule, and every epoch logs the mean combined loss plus miss rate
and final displacement on a validation probe.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import encode_scene
from .exceptions import DomainError, NumericsError, TargetOutsideGridError
from .heatmap import combined_loss, lane_labels, select_top_k, target_heatmap
from .metrics import evaluate
from .model import GohomeModel, predict_scene, save_model
from .nn import tensor as T
from .nn.optim import Adam
from .scenes import Scene
from .trajectory import trajectory_loss

logger = logging.getLogger(__name__)

# 1-indexed epochs at whose start the learning rate halves
LR_DROP_EPOCHS = (3, 6, 9, 13)


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run; defaults are the validation-style recipe."""

    epochs: int = 16
    batch_scenes: int = 32
    lr: float = 1e-3
    lr_drop_epochs: tuple[int, ...] = LR_DROP_EPOCHS
    input_range: float = 128.0
    output_range: float = 96.0
    top_k: int = 20
    sigma: float = 1.0
    ranking_weight: float = 1e-2
    radius: float = 1.8
    num_endpoints: int = 6
    val_probe: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_scenes < 1:
            raise DomainError("epochs and batch_scenes must be >= 1")
        if self.lr <= 0:
            raise DomainError("learning rate must be positive")
        if self.input_range <= 0 or self.output_range <= 0:
            raise DomainError("ranges must be positive")
        if self.top_k is not None and self.top_k < 1:
            raise DomainError("top_k must be >= 1 (or None for all lanelets)")
        if self.sigma <= 0 or self.radius <= 0:
            raise DomainError("sigma and radius must be positive")
        if self.num_endpoints < 1 or self.val_probe < 0:
            raise DomainError("num_endpoints must be >= 1, val_probe >= 0")
        if any(e < 1 for e in self.lr_drop_epochs):
            raise DomainError("lr drop epochs are 1-indexed")


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Rate in force during a 1-indexed epoch: halved at each drop epoch."""
    drops = sum(1 for d in cfg.lr_drop_epochs if epoch >= d)
    return cfg.lr * 0.5**drops


def scene_loss(model: GohomeModel, scene: Scene, cfg: TrainConfig) -> T.Tensor:
    """Combined heatmap/ranking loss plus the trajectory term for one scene.

    Rasters are decoded for the top-k ranked lanelets plus every lanelet that
    actually contains the ground-truth endpoint, so the positive pixels stay
    in the loss even while the ranker is still wrong about them.

    Raises TargetOutsideGridError when the endpoint misses the output grid.
    """
    cropped = model.cropped_scene(scene, cfg.input_range)
    grid = model.output_grid(scene, cfg.output_range)
    lanelets = cropped.lane_graph.lanelets
    feats = encode_scene(cropped, model.encoder)
    scores, ranked = model.decoder.rank_lanes(feats.graph_encoding, lanelets)
    labels = lane_labels(lanelets, scene.gt_endpoint)
    if cfg.top_k is None:
        keep = {l.id for l in lanelets}
    else:
        keep = set(select_top_k(ranked, cfg.top_k))
    ids = sorted(keep | {l.id for l, y in zip(lanelets, labels) if y})
    _, yhat, _ = model.decoder.decode(feats.graph_encoding, lanelets, grid, ids)
    target = target_heatmap(scene.gt_endpoint, grid, sigma=cfg.sigma)
    loss = combined_loss(yhat, target, scores, labels, ranking_weight=cfg.ranking_weight)
    return T.add(loss, trajectory_loss(scene.target, scene.gt_future, model.trajectory))


def validation_metrics(model: GohomeModel, scenes: list[Scene], cfg: TrainConfig) -> dict:
    """Miss rate and minimum displacement errors on a scene list."""
    preds, gts = [], []
    for scene in scenes:
        pred, _, _ = predict_scene(
            model,
            scene,
            output_range=cfg.output_range,
            input_range=cfg.input_range,
            top_k=cfg.top_k,
            num_endpoints=cfg.num_endpoints,
            radius=cfg.radius,
        )
        preds.append(pred)
        gts.append(scene.gt_future)
    ks = tuple(sorted({1, cfg.num_endpoints}))
    report = evaluate(preds, gts, ks=ks)
    k = cfg.num_endpoints
    return {
        "mr": report.mr[k],
        "min_fde": report.min_fde[k],
        "min_ade": report.min_ade[k],
    }


def train(
    model: GohomeModel,
    train_scenes: list[Scene],
    val_scenes: list[Scene] | None = None,
    cfg: TrainConfig = TrainConfig(),
    checkpoint_dir=None,
) -> list[dict]:
    """Run the full schedule; returns one history record per epoch.

    Deterministic for fixed (model seed, scene list, config): scene order is
    reshuffled each epoch from the config seed alone.  A non-finite loss
    aborts immediately with the offending scene named.  Scenes whose
    ground-truth endpoint falls outside the training grid are skipped and
    counted, never silently dropped.
    """
    if not train_scenes:
        raise DomainError("no training scenes")
    opt = Adam(model.parameters(), lr=cfg.lr)
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    history: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = learning_rate(cfg, epoch)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_scenes))
        t0 = time.perf_counter()
        losses: list[float] = []
        skipped = 0
        for start in range(0, len(order), cfg.batch_scenes):
            batch = order[start : start + cfg.batch_scenes]
            opt.zero_grad()
            used = 0
            for i in batch:
                scene = train_scenes[i]
                try:
                    loss = scene_loss(model, scene, cfg)
                except TargetOutsideGridError:
                    skipped += 1
                    continue
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NumericsError(
                        f"non-finite loss {value} on scene {scene.scene_id} "
                        f"(epoch {epoch}, lr {opt.lr:g})"
                    )
                loss.backward()
                losses.append(value)
                used += 1
            if used:
                for p in opt.params:
                    if p.grad is not None:
                        p.grad /= used
                opt.step()
        record = {
            "epoch": epoch,
            "lr": opt.lr,
            "train_loss": float(np.mean(losses)) if losses else float("nan"),
            "scenes": len(losses),
            "skipped": skipped,
            "seconds": time.perf_counter() - t0,
        }
        if val_scenes and cfg.val_probe:
            probe = val_scenes[: cfg.val_probe]
            record.update({f"val_{k}": v for k, v in validation_metrics(model, probe, cfg).items()})
            logger.info(
                "epoch %d/%d lr %.2e loss %.4f val MR_%d %.3f val minFDE %.2f (%.1fs)",
                epoch, cfg.epochs, record["lr"], record["train_loss"],
                cfg.num_endpoints, record["val_mr"], record["val_min_fde"],
                record["seconds"],
            )
        else:
            logger.info(
                "epoch %d/%d lr %.2e loss %.4f (%.1fs)",
                epoch, cfg.epochs, record["lr"], record["train_loss"], record["seconds"],
            )
        history.append(record)
        if checkpoint_dir is not None:
            save_model(model, checkpoint_dir / f"epoch_{epoch:02d}.ckpt")
    if checkpoint_dir is not None:
        save_model(model, checkpoint_dir / "model.ckpt")
    return history
