"""Endpoint-conditioned trajectory reconstruction.

A small fully connected network regresses the intermediate future waypoints
from the observed history and a chosen endpoint, both expressed in the target
agent's frame (last observed pose at the origin, heading along +x).  The
final waypoint is not regressed: it is set to the conditioning endpoint
exactly, so endpoint metrics depend only on the sampler.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ShapeMismatchError
from .maps import frame_to_world, world_to_frame
from .nn import tensor as T
from .nn.layers import Linear, Module
from .nn.tensor import Tensor
from .scenes import AgentTrack

# inputs are meters in the agent frame; this keeps first-layer activations O(1)
INPUT_SCALE = 0.1


@dataclass(frozen=True)
class PredictedTrajectory:
    """Future waypoints in world coordinates; the last one is the endpoint."""

    waypoints: np.ndarray

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=np.float64)
        if wp.ndim != 2 or wp.shape[1] != 2:
            raise ShapeMismatchError(f"waypoints must be (T, 2), got {wp.shape}")
        object.__setattr__(self, "waypoints", wp)

    @property
    def endpoint(self) -> np.ndarray:
        return self.waypoints[-1]


class TrajectoryDecoder(Module):
    """Two hidden layers of 64 units; outputs the intermediate waypoints."""

    def __init__(self, history_steps: int, future_steps: int,
                 rng: np.random.Generator, hidden: int = 64):
        if future_steps < 2:
            raise DomainError("need at least two future steps (one regressed + endpoint)")
        self.history_steps = history_steps
        self.future_steps = future_steps
        in_dim = history_steps * 2 + 2
        self.fc1 = Linear(in_dim, hidden, rng)
        self.fc2 = Linear(hidden, hidden, rng)
        self.out = Linear(hidden, (future_steps - 1) * 2, rng)

    def forward(self, history_flat: np.ndarray, endpoints: Tensor | np.ndarray) -> Tensor:
        """Intermediate waypoints, (B, (T_future - 1) * 2), agent frame.

        ``history_flat`` is a (B, history_steps*2) constant; ``endpoints`` is
        (B, 2).  Both are scaled by INPUT_SCALE internally.
        """
        endpoints = T.as_tensor(endpoints)
        if endpoints.shape != (history_flat.shape[0], 2):
            raise ShapeMismatchError(
                f"endpoints {endpoints.shape} vs batch {history_flat.shape[0]}"
            )
        x = T.concat(
            [T.as_tensor(history_flat * INPUT_SCALE), T.mul(endpoints, INPUT_SCALE)],
            axis=1,
        )
        h = T.relu(self.fc1(x))
        h = T.relu(self.fc2(h))
        return self.out(h)

    def flops(self, batch: int) -> int:
        per_row = (
            2  # endpoint scaling
            + self.fc1.in_dim * self.fc1.out_dim
            + self.fc2.in_dim * self.fc2.out_dim
            + self.out.in_dim * self.out.out_dim
        )
        return batch * per_row


def _history_in_frame(track: AgentTrack) -> tuple[np.ndarray, np.ndarray, float]:
    """(flattened history, origin, heading) for the track's own last pose."""
    x, y, yaw = track.last_pose()
    origin = np.array([x, y])
    local = world_to_frame(track.xy, origin, yaw)
    local[track.mask == 0.0] = 0.0  # hidden steps stay zero in every frame
    return local.reshape(-1), origin, yaw


def decode_trajectories(track: AgentTrack, endpoints_world: np.ndarray,
                        decoder: TrajectoryDecoder) -> list[PredictedTrajectory]:
    """One PredictedTrajectory per endpoint, batched through the decoder.

    Endpoints are world points (e.g. sampled pixel centers); each predicted
    trajectory's final waypoint equals its endpoint exactly.
    """
    endpoints_world = np.asarray(endpoints_world, dtype=np.float64)
    if endpoints_world.ndim != 2 or endpoints_world.shape[1] != 2:
        raise ShapeMismatchError(f"endpoints must be (k, 2), got {endpoints_world.shape}")
    if track.num_steps != decoder.history_steps:
        raise ShapeMismatchError(
            f"track has {track.num_steps} steps, decoder expects {decoder.history_steps}"
        )
    flat, origin, yaw = _history_in_frame(track)
    ep_local = world_to_frame(endpoints_world, origin, yaw)
    k = endpoints_world.shape[0]
    with T.no_grad():
        mid = decoder.forward(np.tile(flat, (k, 1)), ep_local)
    mid_world = frame_to_world(mid.data.reshape(k, -1, 2), origin, yaw)
    out = []
    for i in range(k):
        waypoints = np.concatenate([mid_world[i], endpoints_world[i][None, :]], axis=0)
        out.append(PredictedTrajectory(waypoints=waypoints))
    return out


def decode_trajectory(track: AgentTrack, endpoint_world,
                      decoder: TrajectoryDecoder) -> PredictedTrajectory:
    endpoint_world = np.asarray(endpoint_world, dtype=np.float64)
    return decode_trajectories(track, endpoint_world[None, :], decoder)[0]


def trajectory_loss(track: AgentTrack, gt_future: np.ndarray,
                    decoder: TrajectoryDecoder) -> Tensor:
    """Mean squared error of the intermediate waypoints, conditioned on the
    ground-truth endpoint (teacher forcing), in the agent frame."""
    flat, origin, yaw = _history_in_frame(track)
    gt_local = world_to_frame(np.asarray(gt_future, dtype=np.float64), origin, yaw)
    if gt_local.shape[0] != decoder.future_steps:
        raise ShapeMismatchError(
            f"gt future has {gt_local.shape[0]} steps, decoder expects {decoder.future_steps}"
        )
    mid = decoder.forward(flat[None, :], gt_local[-1][None, :])
    target = gt_local[:-1].reshape(1, -1)
    diff = T.add(mid, -target)
    return T.tmean(T.mul(diff, diff))
