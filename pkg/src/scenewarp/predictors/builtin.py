"""Rule-based predictors that need no external process."""
from __future__ import annotations

import numpy as np

from ..metrics import PredictionSet
from ..scene_model import Scenario, Trajectory, normalize
from .mpc import MpcConfig, predict_centerline_mpc as _mpc_local

N_FUTURE = 30
CV_WINDOW = 5


def constant_velocity_points(history: np.ndarray, n: int = N_FUTURE) -> np.ndarray:
    """Extrapolate the mean per-step displacement of the last few history steps."""
    if len(history) < 2:
        raise ValueError("constant velocity needs at least 2 history points")
    w = min(CV_WINDOW, len(history) - 1)
    step = (history[-1] - history[-1 - w]) / w
    k = np.arange(1, n + 1, dtype=float)[:, None]
    return history[-1] + k * step


def predict_constant_velocity(scn: Scenario) -> PredictionSet:
    # frame-free already: a constant step commutes with rigid motions
    pts = constant_velocity_points(scn.history.points)
    return PredictionSet((Trajectory(pts, scn.dt),), (1.0,))


def predict_centerline_mpc(scn: Scenario, cfg: MpcConfig = MpcConfig(), normalized: bool = False) -> PredictionSet:
    """MPC prediction; runs in the ego frame and maps the result back."""
    if normalized:
        traj = _mpc_local(scn, cfg)
    else:
        local, pose = normalize(scn, lane_fallback=True)
        traj = _mpc_local(local, cfg)
        traj = traj.with_points(pose.to_world(traj.points))
    return PredictionSet((traj,), (1.0,))
