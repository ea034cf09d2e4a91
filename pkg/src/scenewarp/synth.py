"""Synthetic scenario and map-tile corpora (straight roads, arcs, random networks)."""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import geometry as geo
from .scene_model import DEFAULT_LANE_WIDTH, Pose, Scenario, Scene, Trajectory, derive_drivable_area

N_HISTORY = 20
N_FUTURE = 30
DT = 0.1


def road_centerline(arc_start: float, radius: float, sweep: float, behind: float = 80.0, after: float = 120.0,
                    step: float = 1.0) -> tuple[np.ndarray, float]:
    """Straight approach along +x, an optional arc (signed radius, left positive), a straight exit.

    Returns vertices sampled every `step` meters and the arc length of the origin.
    The approach passes through (0, 0); the arc starts at x = arc_start.
    """
    pieces = [np.array([[-behind, 0.0], [arc_start, 0.0]])]
    start = np.array([arc_start, 0.0])
    heading = 0.0
    if radius != 0 and sweep > 0:
        r = abs(radius)
        sgn = math.copysign(1.0, radius)
        n = max(2, int(math.ceil(r * sweep / step)))
        th = np.linspace(0.0, sweep, n + 1)[1:]
        arc = np.column_stack([r * np.sin(th), sgn * r * (1.0 - np.cos(th))]) + start
        pieces.append(arc)
        start = arc[-1]
        heading = sgn * sweep
    end = start + after * np.array([math.cos(heading), math.sin(heading)])
    pieces.append(end[None, :])
    raw = np.vstack(pieces)
    keep = np.concatenate([[True], geo.segment_lengths(raw) > 1e-6])
    lane = geo.resample_uniform(raw[keep], step)
    return lane, behind


def _along(lane: np.ndarray, s: np.ndarray) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(geo.segment_lengths(lane))])
    return np.column_stack([np.interp(s, cum, lane[:, 0]), np.interp(s, cum, lane[:, 1])])


def make_scenario(scenario_id: str, speed: float, radius: float = 0.0, sweep: float = 0.0, arc_start: float = 0.0,
                  second_lane: bool = False, pose: Optional[Pose] = None, lane_width: float = DEFAULT_LANE_WIDTH,
                  with_agent: bool = True) -> Scenario:
    """Ego drives along the first lane at constant `speed`; history ends at the origin before `pose` is applied."""
    lane, s_origin = road_centerline(arc_start, radius, sweep)
    lanes = [lane]
    if second_lane:
        # parallel lane on the left (same shape, shifted along the local normal)
        d = np.gradient(lane, axis=0)
        n = np.column_stack([-d[:, 1], d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]
        lanes.append(lane + lane_width * n)
    k = np.arange(-(N_HISTORY - 1), N_FUTURE + 1)
    s = s_origin + k * speed * DT
    track = _along(lane, s)
    history = track[:N_HISTORY]
    future = track[N_HISTORY:]
    agents = []
    if with_agent and second_lane:
        agent_s = s_origin - 12.0 + k * speed * DT
        agents.append(Trajectory(_along(lanes[1], agent_s), DT))
    scene = derive_drivable_area(Scene(tuple(lanes), (), lane_width))
    scn = Scenario(scene, Trajectory(history, DT), Trajectory(future, DT), tuple(agents), scenario_id)
    if pose is not None:
        scn = scn.map_points(pose.to_world)
    return scn


def random_pose(rng: np.random.Generator) -> Pose:
    return Pose(rng.uniform(-500.0, 500.0, size=2), rng.uniform(-math.pi, math.pi))


def scenario_corpus(n: int = 100, seed: int = 0, straight_share: float = 0.5, zero_speed: int = 4,
                    mu: float = 0.7, gravity: float = 9.81) -> list[Scenario]:
    """Straights and arcs with physically feasible histories, in random world poses."""
    rng = np.random.default_rng(seed)
    out = []
    n_straight = int(round(n * straight_share))
    for i in range(n):
        pose = random_pose(rng)
        second = bool(rng.random() < 0.3)
        sid = f"syn{i:04d}"
        if i < n_straight:
            speed = 0.0 if i < zero_speed else float(rng.uniform(2.0, 20.0))
            out.append(make_scenario(sid, speed, second_lane=second, pose=pose))
        else:
            radius = float(rng.uniform(30.0, 150.0)) * (1 if rng.random() < 0.5 else -1)
            sweep = float(rng.uniform(0.3, 1.0))
            arc_start = float(rng.uniform(-30.0, 20.0))
            v_cap = math.sqrt(mu * gravity * abs(radius))
            speed = float(rng.uniform(0.3, 0.9)) * min(v_cap, 20.0)
            out.append(make_scenario(sid, speed, radius, sweep, arc_start, second_lane=second, pose=pose))
    return out


def straight_corpus(n: int, seed: int = 0, v_range=(2.0, 20.0), mirror: bool = True) -> list[Scenario]:
    """Straight single-lane roads with straight histories; mirror-symmetric about the lane."""
    rng = np.random.default_rng(seed)
    return [
        make_scenario(f"str{i:04d}", float(rng.uniform(*v_range)), pose=random_pose(rng) if not mirror else None)
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# map tiles for retrieval

TILE_SIZE = 200.0


def _random_road(rng: np.random.Generator) -> np.ndarray:
    half = TILE_SIZE / 2.0
    start = rng.uniform(-half * 0.9, half * 0.9, size=2)
    # aim roughly at the tile interior so roads do not leave after a few meters
    heading = math.atan2(-start[1], -start[0]) + rng.uniform(-1.0, 1.0)
    pts = [start]
    length = rng.uniform(60.0, 220.0)
    kind = rng.integers(0, 4)
    step = 2.0
    curv = 0.0
    travelled = 0.0
    while travelled < length:
        if kind == 1:
            curv = rng.uniform(-0.03, 0.03) if travelled == 0 else curv
        elif kind == 2:
            curv = 0.04 * math.sin(travelled / rng.uniform(15.0, 40.0))
        elif kind == 3 and rng.random() < 0.05:
            curv = rng.choice([-1, 1]) * rng.uniform(0.02, 0.08)
        heading += curv * step
        nxt = pts[-1] + step * np.array([math.cos(heading), math.sin(heading)])
        if np.any(np.abs(nxt) > half):
            break
        pts.append(nxt)
        travelled += step
    return np.array(pts)


def random_tile(rng: np.random.Generator, min_roads: int = 2, max_roads: int = 6) -> Scene:
    lanes = []
    target = int(rng.integers(min_roads, max_roads + 1))
    while len(lanes) < target:
        road = _random_road(rng)
        if len(road) >= 20:
            lanes.append(road)
    return Scene(tuple(lanes), (), DEFAULT_LANE_WIDTH)


def tile_corpus(n: int, seed: int = 0) -> list[Scene]:
    rng = np.random.default_rng(seed)
    return [random_tile(rng) for _ in range(n)]
