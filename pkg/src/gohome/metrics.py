"""Miss rate and displacement metrics, baselines, prediction serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DomainError, SceneParseError, ShapeMismatchError
from .scenes import Scene

MISS_THRESHOLD = 2.0
DEFAULT_KS = (1, 6)


@dataclass(frozen=True)
class ScenePrediction:
    """Predicted endpoints (selection order) and their full trajectories."""

    scene_id: str
    endpoints: np.ndarray       # (k, 2)
    masses: np.ndarray          # (k,)
    trajectories: np.ndarray    # (k, T_future, 2), last waypoint = endpoint

    def __post_init__(self):
        eps = np.asarray(self.endpoints, dtype=np.float64)
        masses = np.asarray(self.masses, dtype=np.float64)
        trajs = np.asarray(self.trajectories, dtype=np.float64)
        if eps.ndim != 2 or eps.shape[1] != 2:
            raise ShapeMismatchError(f"endpoints must be (k, 2), got {eps.shape}")
        if masses.shape != (eps.shape[0],):
            raise ShapeMismatchError(f"masses must be ({eps.shape[0]},), got {masses.shape}")
        if trajs.ndim != 3 or trajs.shape[0] != eps.shape[0] or trajs.shape[2] != 2:
            raise ShapeMismatchError(
                f"trajectories must be ({eps.shape[0]}, T, 2), got {trajs.shape}"
            )
        object.__setattr__(self, "endpoints", eps)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "trajectories", trajs)

    @property
    def num_predictions(self) -> int:
        return self.endpoints.shape[0]


@dataclass(frozen=True)
class MetricReport:
    ks: tuple
    threshold: float
    num_scenes: int
    mr: dict = field(default_factory=dict)        # k -> miss rate
    min_fde: dict = field(default_factory=dict)   # k -> mean min final displacement
    min_ade: dict = field(default_factory=dict)   # k -> mean min average displacement

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "num_scenes": self.num_scenes,
            "metrics": {
                str(k): {
                    "MR": self.mr[k],
                    "minFDE": self.min_fde[k],
                    "minADE": self.min_ade[k],
                }
                for k in self.ks
            },
        }

    def table(self) -> str:
        lines = [f"{'k':>4} {'MR':>8} {'minFDE':>8} {'minADE':>8}"]
        for k in self.ks:
            lines.append(
                f"{k:>4} {self.mr[k]:>8.4f} {self.min_fde[k]:>8.3f} {self.min_ade[k]:>8.3f}"
            )
        lines.append(f"miss threshold {self.threshold} m over {self.num_scenes} scenes")
        return "\n".join(lines)


def evaluate(predictions: list[ScenePrediction], gt_futures: list[np.ndarray],
             ks=DEFAULT_KS, threshold: float = MISS_THRESHOLD) -> MetricReport:
    """Aggregate MR_k / minFDE_k / minADE_k over scenes.

    Per scene, the first k predictions (selection order) compete: a miss
    means even the closest of their endpoints lands farther than the
    threshold from the ground-truth endpoint.
    """
    if len(predictions) != len(gt_futures):
        raise DomainError(
            f"{len(predictions)} predictions for {len(gt_futures)} ground truths"
        )
    if not predictions:
        raise DomainError("nothing to evaluate")
    ks = tuple(int(k) for k in ks)
    if min(ks) < 1:
        raise DomainError("metric k values must be >= 1")
    if threshold <= 0.0:
        raise DomainError("miss threshold must be positive")
    max_k = max(ks)

    misses = {k: [] for k in ks}
    fdes = {k: [] for k in ks}
    ades = {k: [] for k in ks}
    for pred, gt in zip(predictions, gt_futures):
        gt = np.asarray(gt, dtype=np.float64)
        if pred.num_predictions < max_k:
            raise DomainError(
                f"scene {pred.scene_id}: {pred.num_predictions} predictions < k={max_k}"
            )
        if pred.trajectories.shape[1] != gt.shape[0]:
            raise ShapeMismatchError(
                f"scene {pred.scene_id}: trajectory horizon {pred.trajectories.shape[1]}"
                f" vs ground truth {gt.shape[0]}"
            )
        fde = np.hypot(*(pred.endpoints - gt[-1]).T)
        ade = np.mean(
            np.linalg.norm(pred.trajectories - gt[None, :, :], axis=2), axis=1
        )
        for k in ks:
            best_fde = float(fde[:k].min())
            misses[k].append(best_fde > threshold)
            fdes[k].append(best_fde)
            ades[k].append(float(ade[:k].min()))

    return MetricReport(
        ks=ks,
        threshold=threshold,
        num_scenes=len(predictions),
        mr={k: float(np.mean(misses[k])) for k in ks},
        min_fde={k: float(np.mean(fdes[k])) for k in ks},
        min_ade={k: float(np.mean(ades[k])) for k in ks},
    )


def constant_velocity_baseline(scene: Scene) -> ScenePrediction:
    """Single-mode extrapolation of the target's last observed velocity."""
    track = scene.target
    i = track.last_valid_index()
    if i == 0:
        velocity = np.zeros(2)
    else:
        velocity = (track.xy[i] - track.xy[i - 1]) / scene.horizon.dt
    steps = np.arange(1, scene.horizon.future_steps + 1)[:, None]
    waypoints = track.xy[i] + velocity[None, :] * scene.horizon.dt * steps
    return ScenePrediction(
        scene_id=scene.scene_id,
        endpoints=waypoints[-1][None, :],
        masses=np.ones(1),
        trajectories=waypoints[None, :, :],
    )


# ---------------------------------------------------------------------------
# prediction files: one JSON object per line

def save_predictions(predictions: list[ScenePrediction], path) -> None:
    lines = []
    for p in predictions:
        lines.append(json.dumps({
            "scene_id": p.scene_id,
            "endpoints": p.endpoints.tolist(),
            "trajectories": p.trajectories.tolist(),
            "masses": p.masses.tolist(),
        }))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_predictions(path) -> list[ScenePrediction]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            out.append(ScenePrediction(
                scene_id=doc["scene_id"],
                endpoints=np.asarray(doc["endpoints"], dtype=np.float64),
                masses=np.asarray(doc["masses"], dtype=np.float64),
                trajectories=np.asarray(doc["trajectories"], dtype=np.float64),
            ))
        except (json.JSONDecodeError, KeyError, ValueError) as err:
            raise SceneParseError(f"bad prediction record: {err}", location=f"line {n + 1}")
    return out
