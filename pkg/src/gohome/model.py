"""The full predictor: scene encoder, heatmap decoder, trajectory decoder.

One GohomeModel owns the three trainable parts and the prediction pipeline:
crop the lane graph to the input range, encode, rank lanelets, decode rasters
for the best k lanelets, project to the output grid, greedily sample
endpoints, and reconstruct one trajectory per endpoint.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .encoder import SceneEncoder, encode_scene, encoder_flops
from .exceptions import ConfigError, SceneInputError
from .heatmap import HeatmapDecoder, HeatmapGrid, select_top_k
from .metrics import ScenePrediction
from .nn import tensor as T
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import Module
from .sampling import sample_endpoints
from .scenes import Scene
from .trajectory import TrajectoryDecoder, decode_trajectories
from .maps import crop_graph

DEFAULT_OUTPUT_RANGE = 192.0
DEFAULT_INPUT_RANGE = 128.0
DEFAULT_TOP_K = 20
DEFAULT_ENDPOINTS = 6
DEFAULT_RADIUS = 1.8


class GohomeModel(Module):
    def __init__(self, channels: int = 64, history_steps: int = 20,
                 future_steps: int = 30, resolution: float = 0.5, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.channels = channels
        self.history_steps = history_steps
        self.future_steps = future_steps
        self.resolution = resolution
        self.encoder = SceneEncoder(channels, rng)
        self.decoder = HeatmapDecoder(channels, rng, resolution=resolution)
        self.trajectory = TrajectoryDecoder(history_steps, future_steps, rng)

    def meta(self) -> dict:
        return {
            "channels": self.channels,
            "history_steps": self.history_steps,
            "future_steps": self.future_steps,
            "resolution": self.resolution,
        }

    def output_grid(self, scene: Scene, output_range: float) -> HeatmapGrid:
        x, y, heading = scene.target.last_pose()
        return HeatmapGrid.centered((x, y), heading, output_range, self.resolution)

    def cropped_scene(self, scene: Scene, input_range: float) -> Scene:
        x, y, heading = scene.target.last_pose()
        graph = crop_graph(scene.lane_graph, (x, y), heading, input_range)
        if graph.num_lanelets == 0:
            raise SceneInputError(
                f"no lanelets within {input_range} m of the target"
            )
        return replace(scene, lane_graph=graph)


def save_model(model: GohomeModel, path) -> None:
    save_checkpoint(
        path,
        [(name, p.data) for name, p in model.named_parameters()],
        meta=model.meta(),
    )


def load_model(path) -> GohomeModel:
    meta, arrays = load_checkpoint(path)
    try:
        model = GohomeModel(
            channels=int(meta["channels"]),
            history_steps=int(meta["history_steps"]),
            future_steps=int(meta["future_steps"]),
            resolution=float(meta["resolution"]),
        )
    except KeyError as err:
        raise ConfigError(f"checkpoint metadata missing {err}")
    named = dict(model.named_parameters())
    if set(named) != set(arrays):
        missing = sorted(set(named) - set(arrays))[:3]
        extra = sorted(set(arrays) - set(named))[:3]
        raise ConfigError(
            f"checkpoint does not match the model: missing {missing}, extra {extra}"
        )
    for name, value in arrays.items():
        if named[name].data.shape != value.shape:
            raise ConfigError(
                f"checkpoint parameter {name} has shape {value.shape}, "
                f"model expects {named[name].data.shape}"
            )
        named[name].data[:] = value
    return model


def predict_scene(model: GohomeModel, scene: Scene, *,
                  output_range: float = DEFAULT_OUTPUT_RANGE,
                  input_range: float = DEFAULT_INPUT_RANGE,
                  top_k: int | None = DEFAULT_TOP_K,
                  num_endpoints: int = DEFAULT_ENDPOINTS,
                  radius: float = DEFAULT_RADIUS):
    """Full pipeline for one scene.

    Returns (ScenePrediction, heatmap grid, info dict).  ``top_k=None``
    decodes every lanelet in range.  ``info`` carries the ranked lane
    scores, the sampled endpoint set, and the decode multiply count
    measured by the runtime op counter (ranking through projection; the
    encoder is excluded, its cost depends on the input range only).
    """
    cropped = model.cropped_scene(scene, input_range)
    grid = model.output_grid(scene, output_range)
    lanelets = cropped.lane_graph.lanelets

    with T.no_grad():
        features = encode_scene(cropped, model.encoder)
        with T.recording() as ops:
            scores, ranked = model.decoder.rank_lanes(
                features.graph_encoding, lanelets
            )
            k = len(lanelets) if top_k is None else top_k
            ids = select_top_k(ranked, k)
            heat, yhat, rasters = model.decoder.decode(
                features.graph_encoding, lanelets, grid, ids
            )
        endpoints = sample_endpoints(heat, num_endpoints, radius)
        trajectories = decode_trajectories(
            scene.target, endpoints.endpoints, model.trajectory
        )

    prediction = ScenePrediction(
        scene_id=scene.scene_id,
        endpoints=endpoints.endpoints,
        masses=endpoints.masses,
        trajectories=np.stack([t.waypoints for t in trajectories]),
    )
    info = {
        "ranked": ranked,
        "endpoints": endpoints,
        "decode_ops": ops.total,
        "encoder_flops": encoder_flops(model.encoder, cropped),
        "decoded_ids": ids,
    }
    return prediction, heat, info
