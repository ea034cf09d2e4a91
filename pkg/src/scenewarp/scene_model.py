"""Scenes, trajectories and scenarios: types, JSON I/O, the ego frame, drivable areas."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

from . import geometry as geo

DEFAULT_LANE_WIDTH = 3.5
RING_SPACING = 0.5


class ScenarioError(ValueError):
    """Raised for unreadable files and for violated type invariants."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"invariant violation: {where} has non-finite coordinates")


def _check_polyline(arr: np.ndarray, where: str) -> None:
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ScenarioError(f"invariant violation: {where} must be a list of [x, y]")
    if len(arr) < 2:
        raise ScenarioError(f"invariant violation: {where} needs at least 2 points")
    _check_finite(arr, where)
    if np.any(geo.segment_lengths(arr) <= geo.COINCIDENT_TOL):
        raise ScenarioError(f"invariant violation: {where} has coincident consecutive points")


@dataclass(frozen=True)
class Trajectory:
    points: np.ndarray
    dt: float = 0.1

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ScenarioError("invariant violation: trajectory must be a list of [x, y]")
        _check_finite(pts, "trajectory")
        if not self.dt > 0:
            raise ScenarioError("invariant violation: dt must be positive")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def speeds(self) -> np.ndarray:
        """Per-step speeds, length N - 1."""
        if len(self.points) < 2:
            return np.zeros(0)
        return geo.segment_lengths(self.points) / self.dt

    def max_speed(self) -> float:
        s = self.speeds()
        return float(s.max()) if len(s) else 0.0

    def with_points(self, pts) -> "Trajectory":
        return Trajectory(pts, self.dt)


@dataclass(frozen=True)
class Scene:
    lanes: tuple
    drivable: tuple = ()
    lane_width: float = DEFAULT_LANE_WIDTH

    def __post_init__(self):
        lanes = tuple(_frozen(l) for l in self.lanes)
        for i, lane in enumerate(lanes):
            _check_polyline(lane, f"lanes[{i}]")
        rings = tuple(_frozen(r) for r in self.drivable)
        for i, ring in enumerate(rings):
            if ring.ndim != 2 or ring.shape[1] != 2 or len(ring) < 3:
                raise ScenarioError(f"invariant violation: drivable[{i}] needs at least 3 points")
            _check_finite(ring, f"drivable[{i}]")
        if not self.lane_width > 0:
            raise ScenarioError("invariant violation: lane_width must be positive")
        object.__setattr__(self, "lanes", lanes)
        object.__setattr__(self, "drivable", rings)

    def map_points(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Scene":
        return Scene(tuple(fn(l) for l in self.lanes), tuple(fn(r) for r in self.drivable), self.lane_width)

    def all_points(self) -> np.ndarray:
        parts = list(self.lanes) + list(self.drivable)
        return np.vstack(parts) if parts else np.zeros((0, 2))

    def contains(self, points) -> np.ndarray:
        return geo.points_in_region(geo.as_points(points), self.drivable)


@dataclass(frozen=True)
class Scenario:
    scene: Scene
    history: Trajectory
    gt_future: Optional[Trajectory] = None
    agents: tuple = ()
    id: str = ""

    def __post_init__(self):
        if len(self.history) == 0:
            raise ScenarioError("invariant violation: history empty")
        object.__setattr__(self, "agents", tuple(self.agents))
        dts = {self.history.dt} | {a.dt for a in self.agents}
        if self.gt_future is not None:
            dts.add(self.gt_future.dt)
        if len(dts) != 1:
            raise ScenarioError("invariant violation: trajectories must share dt")

    @property
    def dt(self) -> float:
        return self.history.dt

    def map_points(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Scenario":
        """Apply one point transform to every point set of the scenario."""
        return Scenario(
            scene=self.scene.map_points(fn),
            history=self.history.with_points(fn(self.history.points)),
            gt_future=None if self.gt_future is None else self.gt_future.with_points(fn(self.gt_future.points)),
            agents=tuple(a.with_points(fn(a.points)) for a in self.agents),
            id=self.id,
        )


@dataclass(frozen=True)
class Pose:
    """Rigid frame: world = R(rotation) @ local + translation."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "translation", _frozen(self.translation))
        object.__setattr__(self, "rotation", geo.wrap_angle(float(self.rotation)))

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        rot = geo.rotation_matrix(-self.rotation)
        return (np.asarray(pts, dtype=float) - self.translation) @ rot.T

    def to_world(self, pts: np.ndarray) -> np.ndarray:
        rot = geo.rotation_matrix(self.rotation)
        return np.asarray(pts, dtype=float) @ rot.T + self.translation


# ---------------------------------------------------------------------------
# frame handling


def history_heading(history: Trajectory) -> float:
    """Heading of the last non-degenerate history segment."""
    pts = history.points
    last = pts[-1]
    for prev in pts[-2::-1]:
        d = last - prev
        if math.hypot(d[0], d[1]) > geo.COINCIDENT_TOL:
            return math.atan2(d[1], d[0])
    raise ScenarioError("degenerate heading: all history points coincide")


def lane_heading_at(scene: Scene, point: np.ndarray) -> float:
    """Tangent direction of the lane segment nearest to `point`."""
    best, best_d = None, math.inf
    for lane in scene.lanes:
        a, d = lane[:-1], np.diff(lane, axis=0)
        t = np.clip(np.einsum("ij,ij->i", point - a, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
        dist = np.hypot(*(a + t[:, None] * d - point).T)
        j = int(np.argmin(dist))
        if dist[j] < best_d:
            best, best_d = d[j], dist[j]
    if best is None:
        raise ScenarioError("degenerate heading: all history points coincide and there are no lanes")
    return math.atan2(best[1], best[0])


def normalize(scn: Scenario, lane_fallback: bool = False) -> tuple[Scenario, Pose]:
    """Move the last history point to the origin with the travel direction along +x.

    A stationary history has no heading; with `lane_fallback` the nearest lane
    tangent stands in, otherwise that is an error.
    """
    try:
        heading = history_heading(scn.history)
    except ScenarioError:
        if not lane_fallback:
            raise
        heading = lane_heading_at(scn.scene, scn.history.points[-1])
    pose = Pose(scn.history.points[-1], heading)
    return scn.map_points(pose.to_local), pose


def denormalize(scn: Scenario, pose: Pose) -> Scenario:
    return scn.map_points(pose.to_world)


# ---------------------------------------------------------------------------
# polylines and drivable area


def resample_polyline(p, spacing: float) -> np.ndarray:
    """Subdivide so consecutive gaps are at most `spacing`; original vertices are kept."""
    return geo.densify(geo.as_points(p), spacing)


def lane_corridor(lane: np.ndarray, width: float) -> Polygon:
    return LineString(lane).buffer(width / 2.0, cap_style="square", join_style="round")


def derive_drivable_area(scene: Scene) -> Scene:
    """Fill in drivable rings from buffered lane centerlines when none are given."""
    if scene.drivable:
        return scene
    if not scene.lanes:
        raise ScenarioError("cannot derive a drivable area without lanes")
    corridors = [lane_corridor(l, scene.lane_width) for l in scene.lanes]
    merged = shapely.unary_union(corridors)
    parts = list(getattr(merged, "geoms", [merged]))
    if any(len(p.interiors) for p in parts):
        # a ring list cannot carry holes; keep the overlapping corridors instead
        parts = corridors
    rings = []
    for poly in parts:
        # drop collinear vertices the buffer leaves behind, so opposite edges densify alike
        poly = shapely.geometry.polygon.orient(poly.simplify(0.0), sign=1.0)
        ring = np.asarray(poly.exterior.coords)[:-1]
        rings.append(geo.densify(ring, RING_SPACING, closed=True))
    return replace(scene, drivable=tuple(rings))


# ---------------------------------------------------------------------------
# JSON files


def _pts(obj, where: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"parse failure: {where}: {exc}") from None
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ScenarioError(f"parse failure: {where} must be a list of [x, y] pairs")
    return arr


def scene_from_dict(d: dict, derive: bool = True) -> Scene:
    lanes = tuple(_pts(l, f"lanes[{i}]") for i, l in enumerate(d.get("lanes", [])))
    drivable = tuple(_pts(r, f"drivable[{i}]") for i, r in enumerate(d.get("drivable") or []))
    lane_width = float(d.get("lane_width", DEFAULT_LANE_WIDTH))
    scene = Scene(lanes, drivable, lane_width)
    return derive_drivable_area(scene) if derive and scene.lanes else scene


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("parse failure: top level must be an object")
    dt = float(d.get("dt", 0.1))
    hist = _pts(d.get("history", []), "history")
    if len(hist) == 0:
        raise ScenarioError("invariant violation: history empty")
    if not d.get("lanes"):
        raise ScenarioError("invariant violation: lanes empty")
    gt = d.get("gt_future")
    return Scenario(
        scene=scene_from_dict(d),
        history=Trajectory(hist, dt),
        gt_future=None if gt is None else Trajectory(_pts(gt, "gt_future"), dt),
        agents=tuple(Trajectory(_pts(a, f"agents[{i}]"), dt) for i, a in enumerate(d.get("agents", []))),
        id=str(d.get("id", "")),
    )


def _plist(arr: np.ndarray) -> list:
    return [[float(x), float(y)] for x, y in arr]


def scene_to_dict(scene: Scene) -> dict:
    return {
        "lanes": [_plist(l) for l in scene.lanes],
        "drivable": [_plist(r) for r in scene.drivable],
        "lane_width": float(scene.lane_width),
    }


def scenario_to_dict(scn: Scenario) -> dict:
    d = {"id": scn.id, "dt": float(scn.dt)}
    d.update(scene_to_dict(scn.scene))
    d["history"] = _plist(scn.history.points)
    if scn.gt_future is not None:
        d["gt_future"] = _plist(scn.gt_future.points)
    d["agents"] = [_plist(a.points) for a in scn.agents]
    return d


def dumps_canonical(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"


def load_scenario(path) -> Scenario:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse failure: {path}: {exc}") from None
    return scenario_from_dict(d)


def save_scenario(scn: Scenario, path) -> None:
    Path(path).write_text(dumps_canonical(scenario_to_dict(scn)), encoding="utf-8")


def load_scene(path) -> Scene:
    """Read only the map part of a scenario-schema file (history optional)."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse failure: {path}: {exc}") from None
    if not d.get("lanes"):
        raise ScenarioError(f"invariant violation: {path}: lanes empty")
    return scene_from_dict(d)


def load_scenarios(paths: Sequence) -> list[Scenario]:
    """Load files and/or every *.json inside given directories, sorted by name."""
    files = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    return [load_scenario(f) for f in files]
