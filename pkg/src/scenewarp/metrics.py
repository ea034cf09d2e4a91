"""Off-road measures, attack loss, dataset rates and displacement errors."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .scene_model import Scene, Trajectory


@dataclass(frozen=True)
class PredictionSet:
    modes: tuple
    probabilities: Optional[tuple] = None

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("a prediction needs at least one mode")
        object.__setattr__(self, "modes", modes)
        if self.probabilities is not None:
            probs = tuple(float(p) for p in self.probabilities)
            if len(probs) != len(modes):
                raise ValueError("probabilities must match the number of modes")
            if any(not 0.0 <= p <= 1.0 for p in probs):
                raise ValueError("probabilities must lie in [0, 1]")
            object.__setattr__(self, "probabilities", probs)

    def map_points(self, fn) -> "PredictionSet":
        return PredictionSet(tuple(m.with_points(fn(m.points)) for m in self.modes), self.probabilities)


@dataclass(frozen=True)
class EvalRecord:
    scenario_id: str
    offroad_fraction: float
    loss: float
    ade: float = math.nan
    fde: float = math.nan
    collided: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("ade", "fde"):
            if math.isnan(d[k]):
                d[k] = None
        return d


@dataclass(frozen=True)
class DatasetReport:
    sor_percent: int
    hor_percent: int
    ade_mean: float
    fde_mean: float
    n: int
    records: tuple = ()
    errors: int = 0

    def to_dict(self) -> dict:
        def num(v):
            return None if math.isnan(v) else float(v)

        return {
            "sor": self.sor_percent,
            "hor": self.hor_percent,
            "ade": num(self.ade_mean),
            "fde": num(self.fde_mean),
            "n": self.n,
            "errors": self.errors,
            "records": [r.to_dict() for r in self.records],
        }


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def offroad_fraction(traj: Trajectory, scene: Scene) -> float:
    """Share of trajectory points outside the drivable rings (boundary counts as on-road)."""
    pts = traj.points
    if len(pts) == 0:
        raise ValueError("empty trajectory")
    if not scene.drivable:
        raise ValueError("scene has no drivable area")
    inside = scene.contains(pts)
    return float(np.count_nonzero(~inside)) / len(pts)


def offroad_fraction_mask(traj: Trajectory, mask: np.ndarray, origin=(0.0, 0.0), resolution: float = 0.5) -> float:
    """Same measure against an imported boolean drivable mask, sampled at pixel centers.

    mask[i, j] covers the cell whose center is origin + (j, i) * resolution.
    Points falling outside the mask extent are off-road.
    """
    pts = traj.points
    col = np.rint((pts[:, 0] - origin[0]) / resolution).astype(int)
    row = np.rint((pts[:, 1] - origin[1]) / resolution).astype(int)
    ok = (row >= 0) & (row < mask.shape[0]) & (col >= 0) & (col < mask.shape[1])
    on = np.zeros(len(pts), dtype=bool)
    on[ok] = mask[row[ok], col[ok]]
    return float(np.count_nonzero(~on)) / len(pts)


def loss_from_fraction(m: float) -> float:
    return (1.0 - m) ** 2


def attack_loss(traj: Trajectory, scene: Scene) -> float:
    return loss_from_fraction(offroad_fraction(traj, scene))


def displacement_errors(pred: Trajectory, gt: Trajectory) -> tuple[float, float]:
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: prediction {len(pred)} vs ground truth {len(gt)}")
    d = np.hypot(*(pred.points - gt.points).T)
    return float(d.mean()), float(d[-1])


def collision_flag(pred: Trajectory, agents: Sequence[Trajectory], radius: float = 1.0) -> bool:
    """True if any agent comes within two radii of the prediction at a shared timestep."""
    for agent in agents:
        n = min(len(pred), len(agent))
        if n == 0:
            continue
        d = np.hypot(*(pred.points[:n] - agent.points[:n]).T)
        if np.any(d < 2.0 * radius):
            return True
    return False


def select_mode(ps: PredictionSet, gt: Optional[Trajectory] = None) -> Trajectory:
    if ps.probabilities is not None:
        return ps.modes[int(np.argmax(ps.probabilities))]
    if len(ps.modes) == 1:
        return ps.modes[0]
    if gt is None:
        raise ValueError("mode selection needs probabilities or a ground truth")
    ades = [displacement_errors(m, gt)[0] for m in ps.modes]
    return ps.modes[int(np.argmin(ades))]


def dataset_report(records: Sequence[EvalRecord], errors: int = 0) -> DatasetReport:
    records = tuple(records)
    if not records:
        raise ValueError("dataset report needs at least one record")
    n = len(records)
    fractions = [r.offroad_fraction for r in records]
    sor = round_half_up(100.0 * math.fsum(fractions) / n)
    hor = round_half_up(100.0 * sum(f > 0.0 for f in fractions) / n)
    ades = [r.ade for r in records if not math.isnan(r.ade)]
    fdes = [r.fde for r in records if not math.isnan(r.fde)]
    return DatasetReport(
        sor_percent=sor,
        hor_percent=hor,
        ade_mean=float(np.mean(ades)) if ades else math.nan,
        fde_mean=float(np.mean(fdes)) if fdes else math.nan,
        n=n,
        records=records,
        errors=errors,
    )
