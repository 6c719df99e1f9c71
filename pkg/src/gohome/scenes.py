"""Scene data model, JSON serialization, dataset layout, and splitting.

One scene = one JSON document (schema v1, documented in docs/scene_schema.md):
a lane graph, agent history tracks, the target agent index, and the target's
ground-truth future.  Coordinates are written with full float64 precision so
load(save(scene)) reproduces every value exactly.  A dataset directory holds
{split}/{scene_id}.json files plus a manifest.json listing ids and horizon.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import MalformedMapError, SceneInputError, SceneParseError
from .maps import LaneGraph, Lanelet, build_relations

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Horizon:
    history_steps: int = 20
    future_steps: int = 30
    dt: float = 0.1


@dataclass(frozen=True)
class AgentTrack:
    """Observed history: per-step position, speed, yaw, and a validity mask."""

    xy: np.ndarray
    speed: np.ndarray
    yaw: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=np.float64)
        n = xy.shape[0]
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise SceneInputError(f"track xy must be (T, 2), got {xy.shape}")
        for name in ("speed", "yaw", "mask"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise SceneInputError(f"track {name} must be ({n},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "xy", xy)
        if not np.all((self.mask == 0.0) | (self.mask == 1.0)):
            raise SceneInputError("track mask entries must be 0 or 1")
        if self.mask.sum() < 1:
            raise SceneInputError("track needs at least one valid timestep")
        valid_yaw = self.yaw[self.mask == 1.0]
        if np.any(valid_yaw <= -math.pi) or np.any(valid_yaw > math.pi):
            raise SceneInputError("yaw must lie in (-pi, pi]")

    @property
    def num_steps(self) -> int:
        return self.xy.shape[0]

    def last_valid_index(self) -> int:
        return int(np.nonzero(self.mask)[0][-1])

    def last_pose(self) -> tuple[float, float, float]:
        i = self.last_valid_index()
        return float(self.xy[i, 0]), float(self.xy[i, 1]), float(self.yaw[i])


@dataclass(frozen=True)
class Scene:
    scene_id: str
    lane_graph: LaneGraph
    agents: list[AgentTrack]
    target_index: int
    gt_future: np.ndarray
    horizon: Horizon = field(default_factory=Horizon)

    def __post_init__(self):
        object.__setattr__(self, "agents", list(self.agents))
        gt = np.asarray(self.gt_future, dtype=np.float64)
        object.__setattr__(self, "gt_future", gt)
        if not self.agents:
            raise SceneInputError("scene needs at least one agent")
        if not (0 <= self.target_index < len(self.agents)):
            raise SceneInputError(f"target_index {self.target_index} out of range")
        if gt.shape != (self.horizon.future_steps, 2):
            raise SceneInputError(
                f"gt_future must be ({self.horizon.future_steps}, 2), got {gt.shape}"
            )
        for i, a in enumerate(self.agents):
            if a.num_steps != self.horizon.history_steps:
                raise SceneInputError(
                    f"agent {i} has {a.num_steps} steps, horizon says {self.horizon.history_steps}"
                )
        ids = [l.id for l in self.lane_graph.lanelets]
        if len(set(ids)) != len(ids):
            raise SceneInputError("lanelet ids must be unique")

    @property
    def target(self) -> AgentTrack:
        return self.agents[self.target_index]

    @property
    def gt_endpoint(self) -> np.ndarray:
        return self.gt_future[-1]


# ---------------------------------------------------------------------------
# serialization

def scene_to_dict(scene: Scene) -> dict:
    g = scene.lane_graph
    return {
        "schema_version": SCHEMA_VERSION,
        "scene_id": scene.scene_id,
        "horizon": {
            "history_steps": scene.horizon.history_steps,
            "future_steps": scene.horizon.future_steps,
            "dt": scene.horizon.dt,
        },
        "lane_graph": {
            "lanelets": [
                {"id": l.id, "width": l.width, "centerline": l.centerline.tolist()}
                for l in g.lanelets
            ],
            # predecessor/right are the transposes, reconstructed on load
            "successor": [list(e) for e in g.relations["successor"]],
            "left": [list(e) for e in g.relations["left"]],
        },
        "agents": [
            {
                "xy": a.xy.tolist(),
                "speed": a.speed.tolist(),
                "yaw": a.yaw.tolist(),
                "mask": a.mask.astype(int).tolist(),
            }
            for a in scene.agents
        ],
        "target_index": scene.target_index,
        "gt_future": scene.gt_future.tolist(),
    }


def save_scene(scene: Scene, path):
    Path(path).write_text(json.dumps(scene_to_dict(scene)), encoding="utf-8")


_SCENE_KEYS = {"schema_version", "scene_id", "horizon", "lane_graph", "agents", "target_index", "gt_future"}
_HORIZON_KEYS = {"history_steps", "future_steps", "dt"}
_LANELET_KEYS = {"id", "width", "centerline"}
_AGENT_KEYS = {"xy", "speed", "yaw", "mask"}


def _need(obj: dict, key: str, loc: str):
    if key not in obj:
        raise SceneParseError(f"missing required field {key!r}", location=loc)
    return obj[key]


def _no_extras(obj: dict, allowed: set, loc: str):
    extras = set(obj) - allowed
    if extras:
        raise SceneParseError(f"unknown fields {sorted(extras)}", location=loc)


def _floats(value, loc: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise SceneParseError("expected an array of numbers", location=loc)
    if not np.all(np.isfinite(arr)):
        raise SceneParseError("non-finite value", location=loc)
    return arr


def scene_from_dict(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise SceneParseError("scene document must be a JSON object", location="")
    _no_extras(doc, _SCENE_KEYS, "")
    if _need(doc, "schema_version", "/schema_version") != SCHEMA_VERSION:
        raise SceneParseError(
            f"unsupported schema_version {doc['schema_version']!r}", location="/schema_version"
        )
    hor = _need(doc, "horizon", "/horizon")
    _no_extras(hor, _HORIZON_KEYS, "/horizon")
    horizon = Horizon(
        history_steps=int(_need(hor, "history_steps", "/horizon/history_steps")),
        future_steps=int(_need(hor, "future_steps", "/horizon/future_steps")),
        dt=float(_need(hor, "dt", "/horizon/dt")),
    )

    graph_doc = _need(doc, "lane_graph", "/lane_graph")
    _no_extras(graph_doc, {"lanelets", "successor", "left"}, "/lane_graph")
    lanelets = []
    for i, entry in enumerate(_need(graph_doc, "lanelets", "/lane_graph/lanelets")):
        loc = f"/lane_graph/lanelets/{i}"
        _no_extras(entry, _LANELET_KEYS, loc)
        try:
            lanelets.append(
                Lanelet(
                    id=int(_need(entry, "id", f"{loc}/id")),
                    centerline=_floats(_need(entry, "centerline", f"{loc}/centerline"), f"{loc}/centerline"),
                    width=float(_need(entry, "width", f"{loc}/width")),
                )
            )
        except (MalformedMapError, ValueError, TypeError) as err:
            raise SceneParseError(str(err), location=loc)
    try:
        graph = LaneGraph(
            lanelets=lanelets,
            relations=build_relations(
                [tuple(e) for e in graph_doc.get("successor", [])],
                [tuple(e) for e in graph_doc.get("left", [])],
            ),
        )
    except (MalformedMapError, ValueError) as err:
        raise SceneParseError(str(err), location="/lane_graph")

    agents = []
    for i, entry in enumerate(_need(doc, "agents", "/agents")):
        loc = f"/agents/{i}"
        _no_extras(entry, _AGENT_KEYS, loc)
        try:
            agents.append(
                AgentTrack(
                    xy=_floats(_need(entry, "xy", f"{loc}/xy"), f"{loc}/xy"),
                    speed=_floats(_need(entry, "speed", f"{loc}/speed"), f"{loc}/speed"),
                    yaw=_floats(_need(entry, "yaw", f"{loc}/yaw"), f"{loc}/yaw"),
                    mask=_floats(_need(entry, "mask", f"{loc}/mask"), f"{loc}/mask"),
                )
            )
        except SceneInputError as err:
            raise SceneParseError(str(err), location=loc)

    try:
        return Scene(
            scene_id=str(_need(doc, "scene_id", "/scene_id")),
            lane_graph=graph,
            agents=agents,
            target_index=int(_need(doc, "target_index", "/target_index")),
            gt_future=_floats(_need(doc, "gt_future", "/gt_future"), "/gt_future"),
            horizon=horizon,
        )
    except SceneInputError as err:
        raise SceneParseError(str(err), location="")


def load_scene(path) -> Scene:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SceneParseError(f"invalid JSON: {err}", location=str(path))
    return scene_from_dict(doc)


# ---------------------------------------------------------------------------
# dataset directory layout

def save_dataset(scenes_by_split: dict[str, list[Scene]], root):
    root = Path(root)
    manifest = {"schema_version": SCHEMA_VERSION, "horizon": None, "splits": {}}
    for split, scenes in scenes_by_split.items():
        (root / split).mkdir(parents=True, exist_ok=True)
        ids = []
        for scene in scenes:
            save_scene(scene, root / split / f"{scene.scene_id}.json")
            ids.append(scene.scene_id)
            hor = {
                "history_steps": scene.horizon.history_steps,
                "future_steps": scene.horizon.future_steps,
                "dt": scene.horizon.dt,
            }
            if manifest["horizon"] is None:
                manifest["horizon"] = hor
            elif manifest["horizon"] != hor:
                raise SceneInputError("all scenes in a dataset must share one horizon")
        manifest["splits"][split] = ids
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def load_dataset(root, split: str) -> list[Scene]:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise SceneParseError("manifest.json not found", location=str(manifest_path))
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if split not in manifest.get("splits", {}):
        raise SceneParseError(f"split {split!r} not in manifest", location="/splits")
    return [load_scene(root / split / f"{sid}.json") for sid in manifest["splits"][split]]


def split_scenes(scenes: list[Scene], train_fraction: float, seed: int):
    """Deterministic shuffled split into (train, val)."""
    if not 0.0 < train_fraction < 1.0:
        raise SceneInputError("train_fraction must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(scenes))
    n_train = int(round(len(scenes) * train_fraction))
    train = [scenes[i] for i in order[:n_train]]
    val = [scenes[i] for i in order[n_train:]]
    return train, val


def with_scene_id(scene: Scene, scene_id: str) -> Scene:
    return replace(scene, scene_id=scene_id)
