import json
import math
from dataclasses import replace

import numpy as np
import pytest

from scenewarp import metrics as M
from scenewarp import search as S
from scenewarp import transforms as T
from scenewarp.physics import enforce_feasibility
from scenewarp.predictors import Predictor, PredictorHandle
from scenewarp.scene_model import Pose, Scenario, Scene, Trajectory, derive_drivable_area, load_scenario

from conftest import python_cmd, straight_scenario
from oracles import exhaustive_attack

CV = PredictorHandle("cv")
MPC = PredictorHandle("mpc")


def short_road(lane_end, speed=10.0, sid="short"):
    """Straight road ending at x = lane_end; corridor caps reach lane_end + 1.75."""
    lane = np.array([[-60.0, 0.0], [lane_end, 0.0]])
    k = np.arange(-19, 1) * speed * 0.1
    hist = np.column_stack([k, np.zeros(20)])
    return Scenario(derive_drivable_area(Scene((lane,))), Trajectory(hist, 0.1), id=sid)


# grid


def test_default_grid_shape():
    specs = S.build_grid(S.SearchConfig())
    assert len(specs) == 60
    for fam in T.FAMILIES:
        fam_specs = [s for s in specs if s.family == fam]
        assert len(fam_specs) == 20
        signs = {math.copysign(1, s.params.as_list()[0 if fam == T.RIPPLE_ROAD else 1]) for s in fam_specs}
        assert signs == {1.0, -1.0}
    assert all(s.border == 5.0 for s in specs)
    assert specs == S.build_grid(S.SearchConfig())
    assert {T.power_of(s) for s in specs} == {2.0, 4.0, 6.0, 8.0, 9.0}
    assert S.SearchConfig(k_max=60) and len(S.build_grid(S.SearchConfig(k_max=60))) == 60


def test_family_restriction():
    specs = S.build_grid(S.SearchConfig(k_max=20, families=(T.RIPPLE_ROAD,)))
    assert len(specs) == 20 and all(s.family == T.RIPPLE_ROAD for s in specs)


def test_kmax_must_match_brute_force_grid():
    with pytest.raises(ValueError, match="k_max"):
        S.build_grid(S.SearchConfig(k_max=10))


def test_power_filter():
    specs = S.build_grid(S.SearchConfig(powers=(4.0,)))
    assert len(specs) == 12 and all(math.isclose(T.power_of(s), 4.0) for s in specs)


def test_uniform_random_sampler_is_seeded():
    a = S.build_grid(S.SearchConfig(k_max=15, sampler=S.UNIFORM_RANDOM, seed=3))
    b = S.build_grid(S.SearchConfig(k_max=15, sampler=S.UNIFORM_RANDOM, seed=3))
    c = S.build_grid(S.SearchConfig(k_max=15, sampler=S.UNIFORM_RANDOM, seed=4))
    assert a == b and a != c and len(a) == 15


def test_config_validation():
    with pytest.raises(ValueError):
        S.SearchConfig(k_max=0)
    with pytest.raises(ValueError):
        S.SearchConfig(families=("lane_merge",))
    with pytest.raises(ValueError):
        S.SearchConfig(sampler="tpe")


# single scenario


def test_cv_straight_road_goes_off_road():
    res = S.attack_scenario(straight_scenario(speed=10.0), CV)
    assert res.best_offroad > 0
    assert res.best_loss == min(l for _, l in res.per_candidate)
    assert abs(res.best_loss - (1 - res.best_offroad) ** 2) <= 1e-12
    assert len(res.per_candidate) == 60


def test_mpc_straight_road_stays_on_road():
    cfg = S.SearchConfig(families=(T.SMOOTH_TURN,))
    res = S.attack_scenario(straight_scenario(speed=15.0), MPC, cfg)
    assert res.best_offroad == 0.0 and res.best_loss == 1.0
    # all candidates tie at loss 1, so the earliest wins
    assert res.best_spec == S.build_grid(cfg)[0]


def test_zero_velocity_is_trivial():
    res = S.attack_scenario(straight_scenario(speed=0.0), CV)
    assert res.best_offroad == 0.0


def test_warped_result_is_in_world_frame():
    pose = Pose([120.0, -40.0], 2.2)
    scn = straight_scenario(speed=10.0).map_points(pose.to_world)
    res = S.attack_scenario(scn, CV)
    assert np.allclose(res.warped.history.points[-1], scn.history.points[-1], atol=1e-9)
    # the prediction is stored in world coordinates too
    local = res.warped.map_points(pose.to_local)
    pred = pose.to_local(res.prediction.points)
    assert M.offroad_fraction(Trajectory(pred, 0.1), local.scene) == res.best_offroad


def test_matches_exhaustive_oracle():
    rng = np.random.default_rng(8)
    pred = Predictor(CV)
    specs = S.build_grid(S.SearchConfig())
    for i in range(4):
        scn = straight_scenario(speed=float(rng.uniform(3, 20)), sid=f"o{i}")
        scn = scn.map_points(Pose(rng.uniform(-50, 50, 2), rng.uniform(-3, 3)).to_world)
        res = S.attack_scenario(scn, pred)
        idx, loss = exhaustive_attack(scn, lambda c, p: pred.predict_local(c, p).modes[0].points, specs,
                                      enforce_feasibility)
        assert res.best_spec == specs[idx]
        assert res.best_loss == loss


def test_identity_candidate_bounds_best_loss():
    scn = straight_scenario(speed=12.0)
    specs = [S.identity_spec()] + S.build_grid(S.SearchConfig(families=(T.RIPPLE_ROAD,)))
    res = S.attack_scenario(scn, CV, specs=specs)
    assert res.best_loss <= res.per_candidate[0][1]


def test_superset_grid_never_worse():
    scn = straight_scenario(speed=12.0, sid="sup")
    small = S.build_grid(S.SearchConfig(families=(T.DOUBLE_TURN,)))
    big = S.build_grid(S.SearchConfig())
    a = S.attack_scenario(scn, CV, specs=small)
    b = S.attack_scenario(scn, CV, specs=big)
    assert b.best_loss <= a.best_loss


def test_protocol_errors_count_as_loss_one():
    pred = Predictor(PredictorHandle("external", python_cmd("bad_predictor.py missing_modes")))
    with pytest.raises(S.AttackError, match="no candidate"):
        S.attack_scenario(straight_scenario(), pred, S.SearchConfig(families=(T.RIPPLE_ROAD,)))
    pred.close()


def test_degenerate_candidates_are_skipped():
    specs = [T.make_spec(T.RIPPLE_ROAD, [20.0, 0.77]), T.make_spec(T.SMOOTH_TURN, [10, 0.002, 3])]
    res = S.attack_scenario(straight_scenario(speed=10.0), CV, specs=specs)
    assert res.per_candidate[0][1] == 1.0
    assert res.best_spec == specs[1]


def test_crashing_predictor_does_not_poison_dataset():
    pred = Predictor(PredictorHandle("external", python_cmd("bad_predictor.py crash")))
    results, errors = S.attack_dataset([straight_scenario(sid="a"), straight_scenario(sid="b")], pred)
    assert results == [] and sorted(errors) == ["a", "b"]
    assert "exited" in errors["a"]


def test_result_round_trip_and_determinism(tmp_path):
    scn = straight_scenario(speed=9.0, sid="det", agents=(Trajectory(np.column_stack([np.linspace(-20, 30, 50),
                                                                                      np.full(50, 3.0)]), 0.1),))
    a, b = tmp_path / "a.result.json", tmp_path / "b.result.json"
    S.save_result(S.attack_scenario(scn, CV), a)
    S.save_result(S.attack_scenario(scn, CV), b)
    assert a.read_bytes() == b.read_bytes()
    back = S.load_result(a)
    S.save_result(back, b)
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["best_spec"]["family"] in T.FAMILIES and len(doc["per_candidate"]) == 60


# datasets


def test_evaluate_original_straight_corpus_is_clean():
    scns = [straight_scenario(speed=v, sid=f"s{v}") for v in (3.0, 8.0, 15.0)]
    rep = S.evaluate_dataset(scns, CV, mode="original")
    assert (rep.sor_percent, rep.hor_percent, rep.n) == (0, 0, 3)
    assert rep.ade_mean == pytest.approx(0.0, abs=1e-12)


def test_toy_dataset_rates():
    # prediction reaches x = 1..30; road caps at 25.75 + 1.75 = 27.5, so 3 of 30 points are off
    scns = [short_road(25.75, sid="a"), short_road(100.0, sid="b")]
    recs, _ = S.evaluate_original(scns, CV)
    assert [r.offroad_fraction for r in recs] == [0.1, 0.0]
    rep = S.evaluate_dataset(scns, CV, mode="original")
    assert (rep.sor_percent, rep.hor_percent) == (5, 50)


def test_evaluate_attacked_mode_and_bad_mode():
    scns = [straight_scenario(speed=10.0, sid="x")]
    cfg = S.SearchConfig(families=(T.SMOOTH_TURN,))
    rep = S.evaluate_dataset(scns, CV, cfg, mode="attacked")
    assert rep.hor_percent == 100
    with pytest.raises(ValueError):
        S.evaluate_dataset(scns, CV, cfg, mode="both")


def test_filter_trivial():
    slow, fast = straight_scenario(speed=0.0, sid="z"), straight_scenario(speed=10.0, sid="f")
    assert S.filter_trivial([slow, fast]) == [fast]
    assert S.filter_trivial([slow, fast], v_min=0.0) == [slow, fast]
    with pytest.raises(ValueError):
        S.filter_trivial([slow], v_min=-1)


def test_heatmap_small():
    scns = [straight_scenario(speed=v, sid=f"h{v}") for v in (6.0, 12.0, 18.0)]
    amps = [-9.0, -4.0, 0.0, 4.0, 9.0]
    grid = S.heatmap(scns, CV, T.RIPPLE_ROAD, ("frequency", [0.01, 0.017]), ("amplitude", amps))
    assert len(grid) == 2 and all(len(r) == 5 for r in grid)
    for row in grid:
        assert row[2] == 0
        assert row[0] == row[4] and row[1] == row[3]
        assert row[1] <= row[0] and row[3] <= row[4]
    with pytest.raises(ValueError):
        S.heatmap(scns, CV, T.RIPPLE_ROAD, ("frequency", []), ("amplitude", amps))
    with pytest.raises(ValueError):
        S.heatmap(scns, CV, T.RIPPLE_ROAD, ("width", [1.0]), ("amplitude", amps))


def test_transfer_eval():
    scns = [straight_scenario(speed=v, sid=f"t{v}") for v in (7.0, 14.0)]
    results, _ = S.attack_dataset(scns, CV, S.SearchConfig(families=(T.SMOOTH_TURN,)))
    rep = S.transfer_eval(results, CV)
    assert rep.hor_percent == 100 and rep.n == 2
    again = S.transfer_eval(results, CV)
    assert rep.to_dict() == again.to_dict()
    mpc_results, _ = S.attack_dataset(scns[:1], MPC, S.SearchConfig(families=(T.SMOOTH_TURN,)))
    with pytest.raises(ValueError):
        S.transfer_eval(mpc_results, MPC)


def test_export_augmented(tmp_path):
    scn = straight_scenario(speed=11.0, sid="aug")
    res = S.attack_scenario(scn, CV)
    paths = S.export_augmented([res], tmp_path / "out")
    assert [p.name for p in paths] == ["aug.aug.json"]
    loaded = load_scenario(paths[0])
    assert loaded.id == "aug"
    replayed = S.replay(loaded, CV)
    assert abs(replayed.best_offroad - res.best_offroad) <= 1e-9
    with pytest.raises(ValueError):
        S.export_augmented([], tmp_path / "none")
