"""Seeded synthetic scene generator.

Each scene is a small road-network tile (a main road plus distractor roads,
all multi-lane) with one target agent following a lane-graph route and a few
background agents.  Templates vary the main road: straight, constant-radius
curve, a fork whose branches both continue every lane, or the mirrored
merge.  Trajectories follow lane centerlines with Ornstein-Uhlenbeck lateral
noise, optional lane changes, and optional constant acceleration, so
constant-velocity extrapolation fails on curved, accelerating, or branching
futures while the lane graph always explains them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError
from .maps import LaneGraph, Lanelet, build_relations, frenet_frame_grid
from .scenes import AgentTrack, Horizon, Scene

TEMPLATES = ("straight", "curve", "fork", "merge")
LANE_SPACING = 4.0  # equal to corridor width so adjacent corridors tile
SLICE_LENGTH = 10.0
POINT_SPACING = 2.5


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    num_scenes: int = 100
    template_mix: tuple[float, float, float, float] = (0.2, 0.3, 0.3, 0.2)
    speed_range: tuple[float, float] = (4.0, 12.0)
    lateral_noise_sigma: float = 0.3
    lane_change_probability: float = 0.15
    horizon: Horizon = field(default_factory=Horizon)

    def __post_init__(self):
        if len(self.template_mix) != len(TEMPLATES):
            raise DomainError(f"template_mix needs {len(TEMPLATES)} fractions")
        if any(f < 0 for f in self.template_mix) or abs(sum(self.template_mix) - 1.0) > 1e-9:
            raise DomainError("template_mix fractions must be nonnegative and sum to 1")
        if self.lateral_noise_sigma < 0:
            raise DomainError("lateral_noise_sigma must be >= 0")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise DomainError("speed_range must satisfy 0 < lo <= hi")
        if not 0 <= self.lane_change_probability <= 1:
            raise DomainError("lane_change_probability must be in [0, 1]")


class _Axis:
    """Dense reference polyline a road's lanes are offset from."""

    def __init__(self, points: np.ndarray):
        self._lane = Lanelet(id=-1, centerline=np.asarray(points, dtype=np.float64))

    @property
    def length(self) -> float:
        return self._lane.length

    def frame(self, s, d):
        """World points at arclengths s and lateral offsets d."""
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        d = np.broadcast_to(np.asarray(d, dtype=np.float64), s.shape)
        return frenet_frame_grid(self._lane, s, d)[0]


def _walk_axis(start, heading, spans):
    """Integrate (length, curvature) spans into a polyline at fixed steps."""
    pts = [np.asarray(start, dtype=np.float64)]
    h = float(heading)
    for length, kappa in spans:
        n = max(1, int(round(length / POINT_SPACING)))
        step = length / n
        for _ in range(n):
            h_mid = h + 0.5 * kappa * step  # midpoint heading keeps arcs on-radius
            pts.append(pts[-1] + step * np.array([math.cos(h_mid), math.sin(h_mid)]))
            h += kappa * step
    return np.array(pts)


def _reverse_axis(points: np.ndarray) -> np.ndarray:
    return points[::-1].copy()


class _MapBuilder:
    """Accumulates lanelets and relations while roads are laid out."""

    def __init__(self):
        self.lanelets: list[Lanelet] = []
        self.succ: list[tuple[int, int]] = []
        self.left: list[tuple[int, int]] = []

    def add_road(self, axis: _Axis, lane_offsets) -> list[list[int]]:
        """Slice a road into per-lane lanelet chains; returns grid[lane][slice]."""
        n_slices = max(1, int(round(axis.length / SLICE_LENGTH)))
        bounds = np.linspace(0.0, axis.length, n_slices + 1)
        grid = []
        for offset in lane_offsets:
            chain = []
            for k in range(n_slices):
                lo, hi = bounds[k], bounds[k + 1]
                n_pts = max(2, int(round((hi - lo) / POINT_SPACING)) + 1)
                stations = np.linspace(lo, hi, n_pts)
                center = axis.frame(stations, np.full(n_pts, offset))
                lid = len(self.lanelets)
                self.lanelets.append(Lanelet(id=lid, centerline=center))
                if chain:
                    self.succ.append((chain[-1], lid))
                chain.append(lid)
            grid.append(chain)
        for low, high in zip(grid[:-1], grid[1:]):
            for a, b in zip(low, high):
                self.left.append((a, b))
        return grid

    def connect(self, upstream: list[list[int]], downstream: list[list[int]]):
        """Successor edges from each upstream lane end to the downstream start."""
        for up, down in zip(upstream, downstream):
            self.succ.append((up[-1], down[0]))

    def build(self) -> LaneGraph:
        return LaneGraph(lanelets=self.lanelets, relations=build_relations(self.succ, self.left))


@dataclass
class _Chain:
    """Route support: consecutive axes plus the lane offsets available on them."""

    axes: list[_Axis]
    lane_offsets: list[float]

    @property
    def lengths(self):
        return [a.length for a in self.axes]

    @property
    def total_length(self):
        return sum(self.lengths)

    def frame(self, s, d):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        d = np.broadcast_to(np.asarray(d, dtype=np.float64), s.shape).copy()
        out = np.empty((s.size, 2))
        cursor = 0.0
        remaining = np.ones(s.size, dtype=bool)
        for i, axis in enumerate(self.axes):
            is_last = i == len(self.axes) - 1
            hi = cursor + axis.length
            sel = remaining & ((s <= hi) | (np.full(s.shape, is_last)))
            if sel.any():
                out[sel] = axis.frame(s[sel] - cursor, d[sel])
                remaining &= ~sel
            cursor = hi
        return out


def _lane_offsets(num_lanes: int) -> list[float]:
    return [LANE_SPACING * i for i in range(num_lanes)]


def _add_distractors(builder: _MapBuilder, rng, center: np.ndarray) -> None:
    # disconnected roads near the target so ranking has plausible but wrong
    # candidates that survive the encoder's input-range crop
    for side in (-1.0, 1.0):
        y_par = center[1] + side * rng.uniform(20.0, 32.0)
        length = rng.uniform(100.0, 120.0)
        x0 = center[0] - length / 2.0 + rng.uniform(-8.0, 8.0)
        par = _Axis(_walk_axis((x0, y_par), 0.0, [(length, 0.0)]))
        builder.add_road(par, _lane_offsets(int(rng.integers(2, 4))))

    x_perp = center[0] + rng.uniform(26.0, 44.0) * rng.choice([-1.0, 1.0])
    length = rng.uniform(90.0, 110.0)
    y0 = center[1] - length / 2.0 + rng.uniform(-8.0, 8.0)
    perp = _Axis(_walk_axis((x_perp, y0), math.pi / 2, [(length, 0.0)]))
    builder.add_road(perp, _lane_offsets(int(rng.integers(2, 4))))


def _build_template(template: str, rng) -> tuple[_MapBuilder, _Chain, list[_Chain]]:
    """Returns (map builder, target route chain, alternative chains for others)."""
    builder = _MapBuilder()
    num_lanes = int(rng.integers(2, 4))
    offsets = _lane_offsets(num_lanes)
    start = np.array([rng.uniform(-72.0, -64.0), rng.uniform(-4.0, 4.0)])
    heading = rng.uniform(-0.15, 0.15)

    if template == "straight":
        axis = _Axis(_walk_axis(start, heading, [(rng.uniform(130.0, 150.0), 0.0)]))
        builder.add_road(axis, offsets)
        chains = [_Chain([axis], offsets)]
    elif template == "curve":
        lead = rng.uniform(25.0, 45.0)
        kappa = rng.choice([-1.0, 1.0]) / rng.uniform(40.0, 70.0)
        axis = _Axis(_walk_axis(start, heading, [(lead, 0.0), (rng.uniform(95.0, 115.0), kappa)]))
        builder.add_road(axis, offsets)
        chains = [_Chain([axis], offsets)]
    elif template == "fork":
        stem_pts = _walk_axis(start, heading, [(rng.uniform(52.0, 64.0), 0.0)])
        stem = _Axis(stem_pts)
        end = stem_pts[-1]
        end_heading = math.atan2(*(stem_pts[-1] - stem_pts[-2])[::-1])
        blen = rng.uniform(75.0, 88.0)
        a_curves = rng.random() < 0.5
        k_a = (rng.choice([-1.0, 1.0]) / rng.uniform(90.0, 140.0)) if a_curves else 0.0
        k_b = -(np.sign(k_a) or rng.choice([-1.0, 1.0])) / rng.uniform(45.0, 75.0)
        branch_a = _Axis(_walk_axis(end, end_heading, [(blen, k_a)]))
        branch_b = _Axis(_walk_axis(end, end_heading, [(blen, k_b)]))
        g_stem = builder.add_road(stem, offsets)
        g_a = builder.add_road(branch_a, offsets)
        g_b = builder.add_road(branch_b, offsets)
        builder.connect(g_stem, g_a)
        builder.connect(g_stem, g_b)
        chains = [_Chain([stem, branch_a], offsets), _Chain([stem, branch_b], offsets)]
    elif template == "merge":
        # construct downstream stem, then walk upstream axes backward from it
        junction = np.array([rng.uniform(-18.0, -6.0), rng.uniform(-4.0, 4.0)])
        stem = _Axis(_walk_axis(junction, heading, [(rng.uniform(75.0, 88.0), 0.0)]))
        ulen = rng.uniform(52.0, 64.0)
        k_b = rng.choice([-1.0, 1.0]) / rng.uniform(45.0, 75.0)
        up_a = _Axis(_reverse_axis(_walk_axis(junction, heading + math.pi, [(ulen, 0.0)])))
        up_b = _Axis(_reverse_axis(_walk_axis(junction, heading + math.pi, [(ulen, k_b)])))
        g_a = builder.add_road(up_a, offsets)
        g_b = builder.add_road(up_b, offsets)
        g_stem = builder.add_road(stem, offsets)
        builder.connect(g_a, g_stem)
        builder.connect(g_b, g_stem)
        chains = [_Chain([up_a, stem], offsets), _Chain([up_b, stem], offsets)]
    else:
        raise DomainError(f"unknown template {template!r}")

    target_chain = chains[int(rng.integers(len(chains)))]
    return builder, target_chain, chains


def _ou_noise(rng, n: int, sigma: float, dt: float, tau: float = 1.5) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros(n)
    decay = math.exp(-dt / tau)
    spread = sigma * math.sqrt(1.0 - decay * decay)
    x = np.empty(n)
    x[0] = rng.normal(0.0, sigma)
    for i in range(1, n):
        x[i] = decay * x[i - 1] + spread * rng.normal()
    return x


def _rollout(chain: _Chain, rng, cfg: GeneratorConfig, n_steps: int, target: bool):
    """Sample a lane-following path of n_steps points along the chain."""
    dt = cfg.horizon.dt
    v0 = rng.uniform(*cfg.speed_range)
    accel = 0.0
    if target and rng.random() < 0.55:
        accel = rng.choice([-1.0, 1.0]) * rng.uniform(0.6, 1.8)
    v = np.clip(v0 + accel * dt * np.arange(n_steps), 1.0, cfg.speed_range[1] + 2.0)
    travel = float(np.sum(v[1:]) * dt)

    junction_s = chain.lengths[0] if len(chain.axes) > 1 else None
    margin = 4.0
    s_max = chain.total_length - travel - margin
    if target and junction_s is not None and rng.random() < 0.6 and s_max > margin:
        # place the junction crossing inside the future window
        t_cross = rng.uniform(2.2, 4.6)
        steps = int(t_cross / dt)
        s0 = junction_s - float(np.sum(v[1 : steps + 1]) * dt)
        s0 = float(np.clip(s0, margin, s_max))
    else:
        s0 = rng.uniform(margin, max(margin + 1.0, s_max))
    s = s0 + np.concatenate([[0.0], np.cumsum(v[1:]) * dt])
    s = np.clip(s, 0.0, chain.total_length)

    lane = int(rng.integers(len(chain.lane_offsets)))
    offset = np.full(n_steps, chain.lane_offsets[lane])
    if rng.random() < cfg.lane_change_probability and len(chain.lane_offsets) > 1:
        to_lane = lane + rng.choice([-1, 1])
        if 0 <= to_lane < len(chain.lane_offsets):
            t0 = rng.uniform(0.0, 2.0)
            dur = rng.uniform(2.0, 3.0)
            phase = np.clip((np.arange(n_steps) * dt - t0) / dur, 0.0, 1.0)
            blend = 0.5 - 0.5 * np.cos(np.pi * phase)
            offset = offset + blend * (chain.lane_offsets[to_lane] - chain.lane_offsets[lane])

    d = offset + _ou_noise(rng, n_steps, cfg.lateral_noise_sigma, dt)
    return chain.frame(s, d)


def _track_from_path(path: np.ndarray, dt: float, mask: np.ndarray) -> AgentTrack:
    diffs = np.diff(path, axis=0)
    speed = np.hypot(diffs[:, 0], diffs[:, 1]) / dt
    yaw = np.arctan2(diffs[:, 1], diffs[:, 0])
    still = speed < 1e-9
    for i in np.nonzero(still)[0]:  # carry heading through stationary steps
        yaw[i] = yaw[i - 1] if i > 0 else 0.0
    speed = np.concatenate([[speed[0]], speed])
    yaw = np.concatenate([[yaw[0]], yaw])
    yaw[yaw == -math.pi] = math.pi
    xy = path.copy()
    hidden = mask == 0.0
    xy[hidden] = 0.0
    speed[hidden] = 0.0
    yaw[hidden] = 0.0
    return AgentTrack(xy=xy, speed=speed, yaw=yaw, mask=mask)


def generate_scene(template: str, rng, cfg: GeneratorConfig, scene_id: str) -> Scene:
    hor = cfg.horizon
    n_total = hor.history_steps + hor.future_steps
    builder, target_chain, chains = _build_template(template, rng)

    target_path = _rollout(target_chain, rng, cfg, n_total, target=True)
    history = target_path[: hor.history_steps]
    gt_future = target_path[hor.history_steps :]
    agents = [_track_from_path(history, hor.dt, np.ones(hor.history_steps))]

    _add_distractors(builder, rng, history[-1])
    graph = builder.build()

    for _ in range(int(rng.integers(1, 5))):
        chain = chains[int(rng.integers(len(chains)))]
        path = _rollout(chain, rng, cfg, hor.history_steps, target=False)
        mask = np.ones(hor.history_steps)
        if rng.random() < 0.3:
            mask[: int(rng.integers(1, 9))] = 0.0
        agents.append(_track_from_path(path, hor.dt, mask))

    return Scene(
        scene_id=scene_id,
        lane_graph=graph,
        agents=agents,
        target_index=0,
        gt_future=gt_future,
        horizon=hor,
    )


def generate(cfg: GeneratorConfig) -> list[Scene]:
    """Generate cfg.num_scenes scenes, deterministic in cfg.seed."""
    scenes = []
    for i in range(cfg.num_scenes):
        rng = np.random.default_rng([cfg.seed, i])
        template = TEMPLATES[int(rng.choice(len(TEMPLATES), p=cfg.template_mix))]
        scenes.append(generate_scene(template, rng, cfg, f"s{cfg.seed}-{i:05d}-{template}"))
    return scenes
