"""Centerline-tracking MPC on a kinematic bicycle.

The controller is sampling based: every step it scores a small lattice of
(acceleration, steering) pairs by rolling each one out over a short preview in
path coordinates, refines the lattice around the winner a few times, and applies
the best pair to the Cartesian model for one step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo
from ..scene_model import Scenario, ScenarioError, Trajectory

REF_SPACING = 0.5
REF_EXTENSION = 60.0
MAX_REFERENCE_OFFSET = 20.0


class NoReferenceLane(ScenarioError):
    pass


@dataclass(frozen=True)
class MpcConfig:
    wheelbase: float = 2.8
    horizon_steps: int = 30
    dt: float = 0.1
    max_accel: float = 4.0
    max_steer: float = 0.6
    samples_per_step: int = 7
    tracking_weight: float = 1.0
    effort_weight: float = 0.02
    heading_weight: float = 2.0
    speed_weight: float = 0.5
    # friction circle; 0.7 * 9.81 matches the default physics config
    max_lateral_accel: float = 0.7 * 9.81
    # fraction of the friction limit the speed planner aims for in curves
    curve_speed_margin: float = 0.85
    preview_steps: int = 8
    refine_rounds: int = 3

    def __post_init__(self):
        if self.horizon_steps < 1 or self.samples_per_step < 2 or self.preview_steps < 1:
            raise ValueError("horizon, preview and samples_per_step must be positive")
        for name in ("wheelbase", "dt", "max_steer", "max_lateral_accel"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_accel < 0:
            raise ValueError("max_accel must be non-negative")


@dataclass(frozen=True)
class BicycleState:
    x: float
    y: float
    heading: float
    speed: float


def bicycle_step(state: BicycleState, accel: float, steer: float, cfg: MpcConfig) -> BicycleState:
    """Exact integration for one step of constant (accel, steer).

    Constant steering fixes the path curvature, so the vehicle moves along a
    circular arc whose length follows from the (clamped at zero) speed profile.
    """
    v, dt = state.speed, cfg.dt
    if accel < 0 and v + accel * dt < 0:
        dist = -v * v / (2.0 * accel) if v > 0 else 0.0
        v_new = 0.0
    else:
        dist = v * dt + 0.5 * accel * dt * dt
        v_new = v + accel * dt
    k = math.tan(steer) / cfg.wheelbase
    turn = k * dist
    half = 0.5 * turn
    chord = dist * (math.sin(half) / half if abs(half) > 1e-12 else 1.0)
    mid = state.heading + half
    return BicycleState(
        state.x + chord * math.cos(mid),
        state.y + chord * math.sin(mid),
        state.heading + turn,
        v_new,
    )


@dataclass
class Reference:
    """Dense centerline with arc length, heading, curvature and a speed ceiling."""

    pts: np.ndarray
    s: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray
    speed_cap: np.ndarray = field(default=None)

    @classmethod
    def from_polyline(cls, lane: np.ndarray, start_s: float = 0.0) -> "Reference":
        pts = geo.resample_uniform(lane, REF_SPACING)
        d_end = pts[-1] - pts[-2]
        d_end = d_end / np.hypot(*d_end)
        ext = pts[-1] + np.outer(np.arange(1, int(REF_EXTENSION / REF_SPACING) + 1) * REF_SPACING, d_end)
        pts = np.vstack([pts, ext])
        seg = np.diff(pts, axis=0)
        s = np.concatenate([[0.0], np.cumsum(np.hypot(*seg.T))])
        seg_heading = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))
        heading = np.concatenate([seg_heading, seg_heading[-1:]])
        mid_s = 0.5 * (s[1:] + s[:-1])
        k_mid = np.diff(seg_heading) / np.diff(mid_s)
        curvature = np.concatenate([[k_mid[0]], k_mid, [0.0]]) if len(k_mid) else np.zeros(len(pts))
        return cls(pts, s - start_s, heading, curvature)

    def plan_speed(self, cruise: float, cfg: MpcConfig) -> None:
        """Curvature-limited cruise speed, lowered so braking at max_accel reaches every limit."""
        k = np.abs(self.curvature)
        with np.errstate(divide="ignore"):
            limit = np.sqrt(cfg.curve_speed_margin * cfg.max_lateral_accel / k)
        cap = np.minimum(limit, cruise)
        decel = max(cfg.max_accel, 1e-9)
        for i in range(len(cap) - 2, -1, -1):
            ds = self.s[i + 1] - self.s[i]
            cap[i] = min(cap[i], math.sqrt(cap[i + 1] ** 2 + 2.0 * decel * ds))
        self.speed_cap = cap

    def locate(self, x: float, y: float, hint: int = 0, window: int = 80) -> tuple[int, float, float]:
        """Nearest reference index near `hint`, signed lateral offset, arc length."""
        lo = max(0, hint - 10)
        hi = min(len(self.pts), hint + window)
        d2 = (self.pts[lo:hi, 0] - x) ** 2 + (self.pts[lo:hi, 1] - y) ** 2
        i = lo + int(np.argmin(d2))
        h = self.heading[i]
        dx, dy = x - self.pts[i, 0], y - self.pts[i, 1]
        along = dx * math.cos(h) + dy * math.sin(h)
        lateral = -dx * math.sin(h) + dy * math.cos(h)
        return i, lateral, self.s[i] + along

    def at(self, s: np.ndarray, values: np.ndarray) -> np.ndarray:
        return np.interp(s, self.s, values)


def pick_reference(scn: Scenario, heading: float) -> np.ndarray:
    """Lane whose centerline passes closest to the prediction origin, oriented with travel."""
    origin = scn.history.points[-1]
    best, best_d = None, math.inf
    direction = np.array([math.cos(heading), math.sin(heading)])
    for lane in scn.scene.lanes:
        a, b = lane[:-1], lane[1:]
        d = b - a
        dd = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("ij,ij->i", origin - a, d) / dd, 0.0, 1.0)
        proj = a + t[:, None] * d
        dist = np.hypot(*(proj - origin).T)
        j = int(np.argmin(dist))
        oriented = lane if float(np.dot(d[j], direction)) >= 0 else lane[::-1]
        if dist[j] < best_d - 1e-12:
            best, best_d = oriented, float(dist[j])
    if best is None or best_d > MAX_REFERENCE_OFFSET:
        raise NoReferenceLane("no reference lane within 20 m of the prediction origin")
    return best


def initial_state(scn: Scenario) -> tuple[BicycleState, bool]:
    pts = scn.history.points
    last = pts[-1]
    for prev in pts[-2::-1]:
        d = last - prev
        if math.hypot(*d) > geo.COINCIDENT_TOL:
            break
    else:
        return BicycleState(float(last[0]), float(last[1]), 0.0, 0.0), False
    speed = math.hypot(*(pts[-1] - pts[-2])) / scn.dt if len(pts) >= 2 else 0.0
    return BicycleState(float(last[0]), float(last[1]), math.atan2(d[1], d[0]), speed), True


class _Planner:
    def __init__(self, ref: Reference, cfg: MpcConfig, cruise: float):
        self.ref = ref
        self.cfg = cfg
        self.cruise = cruise
        unit = np.linspace(-1.0, 1.0, cfg.samples_per_step)
        ua, ud = np.meshgrid(unit, unit, indexing="ij")
        self.ua, self.ud = ua.ravel(), ud.ravel()
        self.shrink = cfg.samples_per_step / 2.0

    def steer_limit(self, v: float) -> float:
        cfg = self.cfg
        if v <= 1e-9:
            return cfg.max_steer
        return min(cfg.max_steer, math.atan(cfg.max_lateral_accel * cfg.wheelbase / (v * v)))

    def rollout_cost(self, s0, e0, psi0, v0, accel, steer):
        """Frenet rollouts of constant controls; arrays of candidates in, costs out."""
        cfg = self.cfg
        dt = cfg.dt
        ref_s, ref_k, ref_cap = self.ref.s, self.ref.curvature, self.ref.speed_cap
        cruise = self.cruise
        k_path = np.tan(steer) / cfg.wheelbase
        cost = cfg.effort_weight * ((accel / max(cfg.max_accel, 1e-9)) ** 2 + (steer / cfg.max_steer) ** 2)
        s, e, psi, v = s0, e0, psi0, v0
        dv = accel * dt
        for step in range(cfg.preview_steps):
            v_new = np.maximum(v + dv, 0.0)
            dist = 0.5 * dt * (v + v_new)
            kappa = np.interp(s, ref_s, ref_k)
            ds = dist * np.cos(psi) / np.maximum(1.0 - kappa * e, 0.2)
            dpsi = k_path * dist - kappa * ds
            e = e + dist * np.sin(psi + 0.5 * dpsi)
            psi = psi + dpsi
            s = s + ds
            v = v_new
            cap = np.interp(s, ref_s, ref_cap)
            over = np.maximum(v - cap, 0.0)
            under = np.maximum(np.minimum(cap, cruise) - v, 0.0)
            w = 1.0 + step / cfg.preview_steps
            cost = cost + w * (
                cfg.tracking_weight * e * e
                + cfg.heading_weight * psi * psi
                + cfg.speed_weight * (10.0 * over * over + 0.1 * under * under)
            )
        return cost

    def choose(self, s0, e0, psi0, v0):
        cfg = self.cfg
        lim = self.steer_limit(v0)
        a_center = 0.0
        kappa = float(np.interp(s0 + v0 * cfg.dt, self.ref.s, self.ref.curvature))
        d_center = math.atan(cfg.wheelbase * kappa)
        a_span, d_span = cfg.max_accel, max(lim, 0.05)
        best = (0.0, 0.0)
        for _ in range(cfg.refine_rounds):
            A = np.clip(a_center + a_span * self.ua, -cfg.max_accel, cfg.max_accel)
            D = np.clip(d_center + d_span * self.ud, -lim, lim)
            costs = self.rollout_cost(s0, e0, psi0, v0, A, D)
            j = int(np.argmin(costs))
            best = (float(A[j]), float(D[j]))
            a_center, d_center = best
            a_span /= self.shrink
            d_span /= self.shrink
        return best


def plan_controls(scn: Scenario, cfg: MpcConfig = MpcConfig()) -> tuple[BicycleState, list]:
    """Initial state and the (accel, steer) sequence chosen by the controller."""
    state, moving = initial_state(scn)
    lane = pick_reference(scn, state.heading)
    ref = Reference.from_polyline(lane)
    idx, lateral, s_here = ref.locate(state.x, state.y, 0, window=len(ref.pts))
    if not moving:
        state = BicycleState(state.x, state.y, float(ref.heading[idx]), 0.0)
    ref.plan_speed(max(state.speed, 0.0), cfg)
    planner = _Planner(ref, cfg, cruise=state.speed)
    controls = []
    cur = state
    for _ in range(cfg.horizon_steps):
        idx, lateral, s_here = ref.locate(cur.x, cur.y, idx)
        psi = geo.wrap_angle(cur.heading - ref.at(s_here, ref.heading))
        a, d = planner.choose(s_here, lateral, psi, cur.speed)
        # the friction bound has to hold over the whole step, including the speed gained
        v_peak = max(cur.speed, cur.speed + a * cfg.dt)
        lim = planner.steer_limit(v_peak)
        d = float(np.clip(d, -lim, lim))
        controls.append((a, d))
        cur = bicycle_step(cur, a, d, cfg)
    return state, controls


def rollout(state: BicycleState, controls, cfg: MpcConfig) -> list[BicycleState]:
    out = []
    for a, d in controls:
        state = bicycle_step(state, a, d, cfg)
        out.append(state)
    return out


def predict_centerline_mpc(scn: Scenario, cfg: MpcConfig = MpcConfig()) -> Trajectory:
    state, controls = plan_controls(scn, cfg)
    states = rollout(state, controls, cfg)
    return Trajectory(np.array([[st.x, st.y] for st in states]), cfg.dt)
