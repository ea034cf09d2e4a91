"""Friction-limited speed bound and history slow-down for warped scenarios."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .scene_model import Scenario, Scene, Trajectory

CURVATURE_SPACING = 1.0
# relative slack before rescaling; keeps a second pass from nudging points by an ulp
_RESCALE_SLACK = 1e-12


@dataclass(frozen=True)
class PhysicsConfig:
    mu: float = 0.7
    gravity: float = 9.81

    def __post_init__(self):
        if not (self.mu > 0 and self.gravity > 0):
            raise ValueError("mu and gravity must be positive")


def circumradius(p1, p2, p3) -> float:
    a, b, c = (np.asarray(p, dtype=float).reshape(1, 2) for p in (p1, p2, p3))
    if (np.array_equal(a, b) or np.array_equal(b, c) or np.array_equal(a, c)):
        raise ValueError("circumradius needs three distinct points")
    return float(geo.circumradius_many(a, b, c)[0])


def lane_radii(lane: np.ndarray, spacing: float = CURVATURE_SPACING) -> np.ndarray:
    pts = geo.resample_uniform(lane, spacing)
    if len(pts) < 3:
        return np.array([np.inf])
    return geo.circumradius_many(pts[:-2], pts[1:-1], pts[2:])


def min_radius(scene: Scene, spacing: float = CURVATURE_SPACING) -> float:
    """Tightest turn radius over all lanes (inf for straight roads)."""
    if not scene.lanes:
        raise ValueError("scene has no lanes")
    return float(min(lane_radii(l, spacing).min() for l in scene.lanes))


def max_feasible_speed(radius: float, cfg: PhysicsConfig = PhysicsConfig()) -> float:
    if not radius > 0:
        raise ValueError("radius must be positive")
    if math.isinf(radius):
        return math.inf
    return math.sqrt(cfg.mu * cfg.gravity * radius)


def _scale_about(traj: Trajectory, lam: float, index: int) -> Trajectory:
    """Scale displacements about the point at `index` (the prediction-origin timestep)."""
    pts = traj.points
    if len(pts) == 0:
        return traj
    index = min(index, len(pts) - 1)
    anchor = pts[index]
    new = anchor - lam * (anchor - pts)
    new[index] = anchor
    return traj.with_points(new)


def speed_scale(scn: Scenario, cfg: PhysicsConfig = PhysicsConfig(), spacing: float = CURVATURE_SPACING) -> float:
    """Factor in (0, 1] that brings the history under the scene's feasible speed."""
    v_obs = scn.history.max_speed()
    if v_obs == 0.0:
        return 1.0
    v_max = max_feasible_speed(min_radius(scn.scene, spacing), cfg)
    if v_obs <= v_max * (1.0 + _RESCALE_SLACK):
        return 1.0
    return v_max / v_obs


def enforce_feasibility(scn: Scenario, cfg: PhysicsConfig = PhysicsConfig(), spacing: float = CURVATURE_SPACING) -> Scenario:
    """Slow the history (and agents, by the same factor) down to the feasible speed.

    Displacement increments shrink uniformly while the last observed point stays put.
    """
    lam = speed_scale(scn, cfg, spacing)
    if lam == 1.0:
        return scn
    return Scenario(
        scene=scn.scene,
        history=_scale_about(scn.history, lam, len(scn.history) - 1),
        gt_future=scn.gt_future,
        agents=tuple(_scale_about(a, lam, len(scn.history) - 1) for a in scn.agents),
        id=scn.id,
    )
