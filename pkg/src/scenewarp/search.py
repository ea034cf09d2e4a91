"""Brute-force scene search against a predictor, plus dataset-level drivers."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import metrics as M
from . import physics
from . import transforms as T
from .predictors import ExternalProcessExited, ExternalTimeout, Predictor, PredictorHandle, ProtocolError
from .predictors.mpc import NoReferenceLane
from .scene_model import (
    Pose,
    Scenario,
    ScenarioError,
    Trajectory,
    denormalize,
    dumps_canonical,
    normalize,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)

log = logging.getLogger(__name__)

BRUTE_FORCE = "brute_force"
UNIFORM_RANDOM = "uniform_random"
SAMPLERS = (BRUTE_FORCE, UNIFORM_RANDOM)

# powers shared by the turn families (curvature = power / 3000) and ripple amplitudes
GRID_POWERS = (2.0, 4.0, 6.0, 8.0, 9.0)
TURN_LENGTHS = (10.0, 20.0)
DOUBLE_GAPS = (10.0, 20.0)
RIPPLE_FREQUENCIES = (0.01, 0.017)
DEFAULT_EXPONENT = 3.0
COLLISION_RADIUS = 1.0


class AttackError(RuntimeError):
    pass


def default_grid() -> dict:
    """Parameter lists per family; 20 each, both turn directions."""
    smooth, double, ripple = [], [], []
    for length in TURN_LENGTHS:
        for p in GRID_POWERS:
            for sign in (1.0, -1.0):
                smooth.append([length, sign * p / T.POWER_SCALE, DEFAULT_EXPONENT])
    for gap in DOUBLE_GAPS:
        for p in GRID_POWERS:
            for sign in (1.0, -1.0):
                double.append([TURN_LENGTHS[0], sign * p / T.POWER_SCALE, DEFAULT_EXPONENT, gap])
    for freq in RIPPLE_FREQUENCIES:
        for p in GRID_POWERS:
            for sign in (1.0, -1.0):
                ripple.append([sign * p, freq])
    return {T.SMOOTH_TURN: smooth, T.DOUBLE_TURN: double, T.RIPPLE_ROAD: ripple}


@dataclass(frozen=True)
class SearchConfig:
    k_max: Optional[int] = None  # None: the whole grid (60 with the defaults)
    border: float = T.DEFAULT_BORDER
    families: tuple = T.FAMILIES
    grid: Optional[dict] = None
    sampler: str = BRUTE_FORCE
    physics: physics.PhysicsConfig = field(default_factory=physics.PhysicsConfig)
    enforce_physics: bool = True
    seed: int = 0
    powers: Optional[tuple] = None

    def __post_init__(self):
        if self.k_max is not None and self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        unknown = set(self.families) - set(T.FAMILIES)
        if unknown or not self.families:
            raise ValueError(f"bad families {sorted(unknown) or self.families}")


def _power_match(spec: T.TransformSpec, powers) -> bool:
    return powers is None or any(abs(T.power_of(spec) - p) < 1e-9 for p in powers)


def _random_specs(cfg: SearchConfig, k: int) -> list:
    rng = np.random.default_rng(cfg.seed)
    lo, hi = min(GRID_POWERS), max(GRID_POWERS)
    out = []
    for _ in range(k):
        family = cfg.families[int(rng.integers(len(cfg.families)))]
        power = rng.uniform(lo, hi) * rng.choice([-1.0, 1.0])
        if family == T.SMOOTH_TURN:
            params = [rng.uniform(*TURN_LENGTHS), power / T.POWER_SCALE, DEFAULT_EXPONENT]
        elif family == T.DOUBLE_TURN:
            params = [TURN_LENGTHS[0], power / T.POWER_SCALE, DEFAULT_EXPONENT, rng.uniform(*DOUBLE_GAPS)]
        else:
            params = [power, rng.uniform(*RIPPLE_FREQUENCIES)]
        out.append(T.make_spec(family, params, cfg.border))
    return out


def build_grid(cfg: SearchConfig = SearchConfig()) -> list:
    """Deterministic candidate list for one attack."""
    if cfg.sampler == UNIFORM_RANDOM:
        return _random_specs(cfg, cfg.k_max or 60)
    grid = cfg.grid if cfg.grid is not None else default_grid()
    specs = [
        T.make_spec(family, params, cfg.border)
        for family in T.FAMILIES
        if family in cfg.families
        for params in grid.get(family, [])
    ]
    specs = [s for s in specs if _power_match(s, cfg.powers)]
    if not specs:
        raise ValueError("the search grid is empty")
    if cfg.k_max is not None and cfg.k_max != len(specs):
        raise ValueError(f"grid has {len(specs)} candidates but k_max is {cfg.k_max}")
    return specs


# ---------------------------------------------------------------------------
# single-scenario attack


@dataclass(frozen=True)
class AttackResult:
    scenario_id: str
    best_spec: T.TransformSpec
    best_loss: float
    best_offroad: float
    warped: Scenario
    per_candidate: tuple = ()
    prediction: Optional[Trajectory] = None
    ade: float = math.nan
    fde: float = math.nan
    collided: bool = False

    def record(self) -> M.EvalRecord:
        return M.EvalRecord(self.scenario_id, self.best_offroad, self.best_loss, self.ade, self.fde, self.collided)

    def to_dict(self) -> dict:
        def num(v):
            return None if math.isnan(v) else v

        return {
            "scenario_id": self.scenario_id,
            "best_spec": self.best_spec.to_dict(),
            "best_loss": self.best_loss,
            "best_offroad": self.best_offroad,
            "ade": num(self.ade),
            "fde": num(self.fde),
            "collided": self.collided,
            "prediction": None if self.prediction is None else self.prediction.points.tolist(),
            "per_candidate": [{"spec": s.to_dict(), "loss": l} for s, l in self.per_candidate],
            "warped": scenario_to_dict(self.warped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackResult":
        warped = scenario_from_dict(d["warped"])
        pred = d.get("prediction")

        def num(v):
            return math.nan if v is None else float(v)

        return cls(
            scenario_id=d["scenario_id"],
            best_spec=T.TransformSpec.from_dict(d["best_spec"]),
            best_loss=float(d["best_loss"]),
            best_offroad=float(d["best_offroad"]),
            warped=warped,
            per_candidate=tuple((T.TransformSpec.from_dict(c["spec"]), float(c["loss"])) for c in d["per_candidate"]),
            prediction=None if pred is None else Trajectory(pred, warped.dt),
            ade=num(d.get("ade")),
            fde=num(d.get("fde")),
            collided=bool(d.get("collided", False)),
        )


def _as_predictor(predictor) -> Predictor:
    return predictor if isinstance(predictor, Predictor) else Predictor(predictor)


def evaluate_local(local: Scenario, pose: Pose, predictor: Predictor) -> tuple:
    """Predict in the ego frame and score: (offroad fraction, chosen mode, EvalRecord)."""
    ps = predictor.predict_local(local, pose)
    gt = local.gt_future
    mode = M.select_mode(ps, gt if gt is not None and all(len(m) == len(gt) for m in ps.modes) else None)
    m = M.offroad_fraction(mode, local.scene)
    ade = fde = math.nan
    if gt is not None and len(gt) == len(mode):
        ade, fde = M.displacement_errors(mode, gt)
    n_hist = len(local.history)
    futures = [a.with_points(a.points[n_hist:]) for a in local.agents if len(a) > n_hist]
    hit = M.collision_flag(mode, futures, COLLISION_RADIUS)
    return m, mode, M.EvalRecord(local.id, m, M.loss_from_fraction(m), ade, fde, hit)


def candidate_scenario(dense_local: Scenario, spec: T.TransformSpec, cfg: SearchConfig) -> Scenario:
    """Warp (and slow down if needed) a densified, normalized scenario."""
    warped = T.warp_scenario(dense_local, spec, densified=True)
    if cfg.enforce_physics:
        warped = physics.enforce_feasibility(warped, cfg.physics)
    return warped


def attack_scenario(scn: Scenario, predictor, cfg: SearchConfig = SearchConfig(),
                    specs: Optional[Sequence[T.TransformSpec]] = None) -> AttackResult:
    """Try every candidate warp and keep the one whose prediction is most off-road.

    Candidates that cannot be evaluated (self-intersecting road, malformed answer,
    no lane to follow) count as loss 1. A dead or silent external process aborts
    the whole scenario with AttackError.
    """
    predictor = _as_predictor(predictor)
    specs = list(specs) if specs is not None else build_grid(cfg)
    local, pose = normalize(scn, lane_fallback=True)
    dense = replace(local, scene=T.densify_scene(local.scene))
    per_candidate = []
    best = None
    for spec in specs:
        try:
            cand = candidate_scenario(dense, spec, cfg)
            m, mode, rec = evaluate_local(cand, pose, predictor)
        except (T.DegenerateWarp, ProtocolError, NoReferenceLane) as exc:
            log.debug("%s: candidate %s skipped: %s", scn.id, spec.to_dict(), exc)
            per_candidate.append((spec, 1.0))
            continue
        except (ExternalProcessExited, ExternalTimeout) as exc:
            raise AttackError(f"{scn.id}: {exc}") from exc
        per_candidate.append((spec, rec.loss))
        if best is None or rec.loss < best[1].loss:
            best = (spec, rec, cand, mode)
    if best is None:
        raise AttackError(f"{scn.id}: no candidate could be evaluated")
    spec, rec, cand, mode = best
    return AttackResult(
        scenario_id=scn.id,
        best_spec=spec,
        best_loss=rec.loss,
        best_offroad=rec.offroad_fraction,
        warped=denormalize(cand, pose),
        per_candidate=tuple(per_candidate),
        prediction=mode.with_points(pose.to_world(mode.points)),
        ade=rec.ade,
        fde=rec.fde,
        collided=rec.collided,
    )


def identity_spec(border: float = T.DEFAULT_BORDER) -> T.TransformSpec:
    return T.make_spec(T.SMOOTH_TURN, [TURN_LENGTHS[0], 0.0, DEFAULT_EXPONENT], border)


def replay(scn: Scenario, predictor, cfg: SearchConfig = SearchConfig()) -> AttackResult:
    """Re-run a stored scene with the identity warp only."""
    return attack_scenario(scn, predictor, cfg, specs=[identity_spec(cfg.border)])


# ---------------------------------------------------------------------------
# dataset drivers


def attack_dataset(scenarios: Iterable[Scenario], predictor, cfg: SearchConfig = SearchConfig()):
    """Attack every scenario; returns (results sorted by id, {id: error message})."""
    predictor = _as_predictor(predictor)
    specs = build_grid(cfg)
    results, errors = [], {}
    for scn in sorted(scenarios, key=lambda s: s.id):
        try:
            results.append(attack_scenario(scn, predictor, cfg, specs))
        except (AttackError, ScenarioError) as exc:
            log.warning("%s", exc)
            errors[scn.id] = str(exc)
    return results, errors


def evaluate_original(scenarios: Iterable[Scenario], predictor):
    predictor = _as_predictor(predictor)
    records, errors = [], {}
    for scn in sorted(scenarios, key=lambda s: s.id):
        try:
            local, pose = normalize(scn, lane_fallback=True)
            records.append(evaluate_local(local, pose, predictor)[2])
        except (ExternalProcessExited, ExternalTimeout, ProtocolError, NoReferenceLane, ScenarioError) as exc:
            log.warning("%s: %s", scn.id, exc)
            errors[scn.id] = str(exc)
    return records, errors


def evaluate_dataset(scenarios, predictor, cfg: SearchConfig = SearchConfig(), mode: str = "original") -> M.DatasetReport:
    if mode == "original":
        records, errors = evaluate_original(scenarios, predictor)
    elif mode == "attacked":
        results, errors = attack_dataset(scenarios, predictor, cfg)
        records = [r.record() for r in results]
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")
    return M.dataset_report(records, errors=len(errors))


def filter_trivial(scenarios: Iterable[Scenario], v_min: float = 1.0) -> list:
    """Drop scenarios whose history never reaches `v_min` (m/s)."""
    if v_min < 0:
        raise ValueError("v_min must be non-negative")
    return [s for s in scenarios if s.history.max_speed() >= v_min]


PARAM_NAMES = {
    T.SMOOTH_TURN: ("length", "curvature", "exponent"),
    T.DOUBLE_TURN: ("length", "curvature", "exponent", "gap"),
    T.RIPPLE_ROAD: ("amplitude", "frequency"),
}


def default_params(family: str) -> dict:
    if family == T.SMOOTH_TURN:
        vals = [TURN_LENGTHS[0], 0.0, DEFAULT_EXPONENT]
    elif family == T.DOUBLE_TURN:
        vals = [TURN_LENGTHS[0], 0.0, DEFAULT_EXPONENT, DOUBLE_GAPS[0]]
    elif family == T.RIPPLE_ROAD:
        vals = [0.0, RIPPLE_FREQUENCIES[1]]
    else:
        raise ValueError(f"unknown transform family {family!r}")
    return dict(zip(PARAM_NAMES[family], vals))


def heatmap(scenarios, predictor, family: str, param1_axis: tuple, param2_axis: tuple,
            cfg: SearchConfig = SearchConfig(), base: Optional[dict] = None) -> list:
    """HOR percent for every (row value, column value) of two parameters, row-major.

    Axes are (parameter name, values); see PARAM_NAMES for the names per family.
    """
    (name1, values1), (name2, values2) = param1_axis, param2_axis
    if not len(values1) or not len(values2):
        raise ValueError("heatmap axes must be non-empty")
    params = default_params(family)
    params.update(base or {})
    for name in (name1, name2):
        if name not in params:
            raise ValueError(f"{family} has no parameter {name!r}")
    predictor = _as_predictor(predictor)
    scenarios = sorted(scenarios, key=lambda s: s.id)
    prepared = []
    for scn in scenarios:
        local, pose = normalize(scn, lane_fallback=True)
        prepared.append((replace(local, scene=T.densify_scene(local.scene)), pose))
    rows = []
    for v1 in values1:
        row = []
        for v2 in values2:
            p = dict(params, **{name1: v1, name2: v2})
            spec = T.make_spec(family, [p[k] for k in PARAM_NAMES[family]], cfg.border)
            hits = 0
            for dense, pose in prepared:
                try:
                    m = evaluate_local(candidate_scenario(dense, spec, cfg), pose, predictor)[0]
                except (T.DegenerateWarp, ProtocolError, NoReferenceLane):
                    continue
                hits += m > 0.0
            row.append(M.round_half_up(100.0 * hits / len(prepared)))
        rows.append(row)
    return rows


def transfer_eval(stored: Sequence[AttackResult], target) -> M.DatasetReport:
    """Score a target predictor on scenes stored from another predictor's successful attacks."""
    target = _as_predictor(target)
    records, errors = [], 0
    for res in sorted(stored, key=lambda r: r.scenario_id):
        if res.best_offroad <= 0.0:
            continue
        local, pose = normalize(res.warped, lane_fallback=True)
        try:
            records.append(evaluate_local(local, pose, target)[2])
        except (ExternalProcessExited, ExternalTimeout, ProtocolError, NoReferenceLane) as exc:
            log.warning("%s: %s", res.scenario_id, exc)
            errors += 1
    return M.dataset_report(records, errors=errors)


# ---------------------------------------------------------------------------
# files


def save_result(res: AttackResult, path) -> None:
    Path(path).write_text(dumps_canonical(res.to_dict()), encoding="utf-8")


def load_result(path) -> AttackResult:
    return AttackResult.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_results(paths) -> list:
    files = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.result.json")) if p.is_dir() else [p])
    return [load_result(f) for f in files]


def export_augmented(results: Sequence[AttackResult], out_dir) -> list:
    """Write each winning warped scenario as a training-ready scenario file."""
    if not results:
        raise ValueError("nothing to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for res in sorted(results, key=lambda r: r.scenario_id):
        path = out / f"{res.scenario_id}.aug.json"
        save_scenario(res.warped, path)
        paths.append(path)
    return paths
