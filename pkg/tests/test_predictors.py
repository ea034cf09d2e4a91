import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenewarp import predictors as PR
from scenewarp import transforms as T
from scenewarp.metrics import offroad_fraction
from scenewarp.physics import enforce_feasibility
from scenewarp.predictors import mpc
from scenewarp.scene_model import Pose, Scenario, Scene, Trajectory, derive_drivable_area, normalize

from conftest import python_cmd, straight_scenario


def scenario_with_history(hist, lanes=None):
    lanes = lanes or (np.array([[-100.0, 0.0], [200.0, 0.0]]),)
    return Scenario(derive_drivable_area(Scene(lanes)), Trajectory(np.asarray(hist, dtype=float), 0.1), id="h")


# constant velocity


def test_cv_constant_step():
    hist = np.column_stack([np.arange(20.0) - 19, np.zeros(20)])
    ps = PR.predict_constant_velocity(scenario_with_history(hist))
    assert ps.probabilities == (1.0,)
    want = np.column_stack([np.arange(1.0, 31.0), np.zeros(30)])
    assert np.allclose(ps.modes[0].points, want, atol=1e-12)


def test_cv_zero_velocity():
    hist = np.tile([3.0, 4.0], (20, 1))
    pts = PR.predict_constant_velocity(scenario_with_history(hist)).modes[0].points
    assert np.array_equal(pts, np.tile([3.0, 4.0], (30, 1)))


def test_cv_turning_history_uses_mean_of_last_five_steps():
    th = np.linspace(0, 1.0, 20)
    hist = np.column_stack([20 * np.sin(th), 20 * (1 - np.cos(th))])
    pts = PR.predict_constant_velocity(scenario_with_history(hist)).modes[0].points
    step = np.mean(np.diff(hist[-6:], axis=0), axis=0)
    want = hist[-1] + np.arange(1, 31)[:, None] * step
    assert np.allclose(pts, want, atol=1e-12)
    # straight continuation: collinear output
    d = pts - pts[0]
    assert np.max(np.abs(d[:, 0] * step[1] - d[:, 1] * step[0])) < 1e-9


def test_cv_is_scene_blind():
    a = straight_scenario()
    lanes = (np.array([[0.0, 50.0], [10.0, 80.0]]),)
    b = Scenario(derive_drivable_area(Scene(lanes)), a.history)
    pa = PR.predict_constant_velocity(a).modes[0].points
    pb = PR.predict_constant_velocity(b).modes[0].points
    assert np.array_equal(pa, pb)


# bicycle model and MPC


def _continuous(state, accel, steer, cfg, n=4000):
    """Fine-step RK4 of the continuous kinematic bicycle with the speed floored at zero."""
    x = np.array([state.x, state.y, state.heading, state.speed])
    h = cfg.dt / n

    def rhs(s):
        v = max(s[3], 0.0)
        a = accel if (s[3] > 0 or accel > 0) else 0.0
        return np.array([v * math.cos(s[2]), v * math.sin(s[2]), v * math.tan(steer) / cfg.wheelbase, a])

    for _ in range(n):
        k1 = rhs(x)
        k2 = rhs(x + h / 2 * k1)
        k3 = rhs(x + h / 2 * k2)
        k4 = rhs(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        x[3] = max(x[3], 0.0)
    return x


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 30), st.floats(-4, 4), st.floats(-0.6, 0.6), st.floats(-math.pi, math.pi))
def test_bicycle_step_matches_continuous_model(v, a, d, th):
    cfg = mpc.MpcConfig()
    s0 = mpc.BicycleState(1.0, -2.0, th, v)
    s1 = mpc.bicycle_step(s0, a, d, cfg)
    ref = _continuous(s0, a, d, cfg)
    tol = 1e-6 if v + a * cfg.dt > 1e-3 else 1e-4
    assert np.allclose([s1.x, s1.y, s1.speed], ref[[0, 1, 3]], atol=tol)
    assert abs(math.remainder(s1.heading - ref[2], 2 * math.pi)) < tol
    assert s1.speed >= 0.0


def test_mpc_tracks_straight_centerline():
    scn = straight_scenario(speed=12.0)
    traj = PR.predict_centerline_mpc(scn).modes[0]
    assert len(traj) == 30
    assert np.max(np.abs(traj.points[:, 1])) <= 0.1
    assert np.all(np.diff(traj.points[:, 0]) > 0)


def test_mpc_immobilized_vehicle():
    scn = straight_scenario(speed=0.0)
    cfg = mpc.MpcConfig(max_accel=0.0)
    pts = PR.predict_centerline_mpc(scn, cfg).modes[0].points
    assert np.array_equal(pts, np.tile(scn.history.points[-1], (30, 1)))


def test_mpc_without_nearby_lane():
    lanes = (np.array([[-100.0, 40.0], [200.0, 40.0]]),)
    scn = scenario_with_history(np.column_stack([np.arange(20.0) - 19, np.zeros(20)]), lanes)
    with pytest.raises(PR.NoReferenceLane, match="no reference lane"):
        PR.predict_centerline_mpc(scn)


def test_mpc_controls_within_bounds_and_reproduce_output():
    scn = straight_scenario(speed=15.0)
    local, _ = normalize(scn)
    spec = T.make_spec(T.SMOOTH_TURN, [10, 0.003, 3])
    warped = enforce_feasibility(T.warp_scenario(local, spec))
    cfg = mpc.MpcConfig()
    state, controls = mpc.plan_controls(warped, cfg)
    assert len(controls) == cfg.horizon_steps
    for a, d in controls:
        assert abs(a) <= cfg.max_accel and abs(d) <= cfg.max_steer
    states = mpc.rollout(state, controls, cfg)
    pts = np.array([[s.x, s.y] for s in states])
    assert np.array_equal(pts, mpc.predict_centerline_mpc(warped, cfg).points)
    assert offroad_fraction(Trajectory(pts, 0.1), warped.scene) == 0.0


@pytest.mark.parametrize("family, params", [
    ("smooth_turn", [10, -0.003, 3]),
    ("double_turn", [10, 0.003, 3, 10]),
    ("ripple_road", [9, 0.017]),
])
def test_mpc_stays_on_feasible_warped_roads(family, params):
    scn = straight_scenario(speed=18.0)
    local, _ = normalize(scn)
    warped = enforce_feasibility(T.warp_scenario(local, T.make_spec(family, params)))
    traj = PR.predict_centerline_mpc(warped, normalized=True).modes[0]
    assert offroad_fraction(traj, warped.scene) == 0.0


@settings(max_examples=10, deadline=None)
@given(st.floats(-300, 300), st.floats(-300, 300), st.floats(-math.pi, math.pi))
def test_builtins_are_equivariant(tx, ty, rot):
    local, _ = normalize(straight_scenario(speed=11.0))
    spec = T.make_spec(T.SMOOTH_TURN, [20, 0.002, 3])
    base = enforce_feasibility(T.warp_scenario(local, spec))
    pose = Pose([tx, ty], rot)
    moved = base.map_points(pose.to_world)
    for fn in (PR.predict_constant_velocity, PR.predict_centerline_mpc):
        a = pose.to_world(fn(base).modes[0].points)
        b = fn(moved).modes[0].points
        assert np.max(np.abs(a - b)) <= 1e-6


def test_mpc_config_validation():
    with pytest.raises(ValueError):
        mpc.MpcConfig(horizon_steps=0)
    with pytest.raises(ValueError):
        mpc.MpcConfig(max_steer=0.0)


# handles and the external bridge


def test_handle_aliases_and_validation():
    assert PR.PredictorHandle("cv").kind == PR.CONSTANT_VELOCITY
    assert PR.PredictorHandle("mpc").kind == PR.CENTERLINE_MPC
    with pytest.raises(ValueError):
        PR.PredictorHandle("external")
    with pytest.raises(ValueError):
        PR.PredictorHandle("lanegcn")


def test_echo_loopback():
    scn = straight_scenario(speed=7.0)
    ps = PR.predict_external(scn, PR.PredictorHandle("external", python_cmd("bad_predictor.py echo")))
    assert np.array_equal(ps.modes[0].points, np.tile(scn.history.points[-1], (30, 1)))
    assert ps.probabilities == (1.0,)


def test_external_cv_matches_builtin():
    cmd = "python3 -m scenewarp.predictors.servers cv"
    rng = np.random.default_rng(5)
    with PR.Predictor(PR.PredictorHandle("external", cmd)) as ext:
        for i in range(5):
            scn = straight_scenario(speed=float(rng.uniform(1, 20)), sid=f"s{i}")
            scn = scn.map_points(Pose(rng.uniform(-100, 100, 2), rng.uniform(-3, 3)).to_world)
            a = ext.predict(scn).modes[0].points
            b = PR.predict_constant_velocity(scn).modes[0].points
            assert np.max(np.abs(a - b)) <= 1e-9


def test_multimodal_response_parsed():
    scn = straight_scenario()
    ps = PR.predict_external(scn, PR.PredictorHandle("external", python_cmd("bad_predictor.py multimodal")))
    assert len(ps.modes) == 2 and ps.probabilities == (0.3, 0.7)


@pytest.mark.parametrize("mode, err, msg", [
    ("missing_modes", PR.ProtocolError, "missing 'modes'"),
    ("wrong_shape", PR.ProtocolError, "30 finite"),
    ("wrong_id", PR.ProtocolError, "does not match"),
    ("bad_probs", PR.ProtocolError, "probabilities"),
    ("not_json", PR.ProtocolError, "not JSON"),
    ("crash", PR.ExternalProcessExited, "code 7"),
])
def test_external_failures_are_distinct(mode, err, msg):
    handle = PR.PredictorHandle("external", python_cmd(f"bad_predictor.py {mode}"))
    with pytest.raises(err, match=msg):
        PR.predict_external(straight_scenario(), handle)


def test_external_timeout():
    handle = PR.PredictorHandle("external", python_cmd("bad_predictor.py slow"), timeout=0.5)
    with pytest.raises(PR.ExternalTimeout):
        PR.predict_external(straight_scenario(), handle)


def test_missing_executable():
    handle = PR.PredictorHandle("external", "/nonexistent/predictor --flag")
    with pytest.raises(PR.ExternalProcessExited, match="cannot launch"):
        PR.predict_external(straight_scenario(), handle)


def test_request_carries_world_scenario():
    from scenewarp.predictors.bridge import request_message

    scn = straight_scenario().map_points(Pose([10.0, 5.0], 1.0).to_world)
    msg = request_message(scn)
    assert list(msg) == ["id", "dt", "history", "agents", "lanes", "drivable"]
    assert np.allclose(msg["history"], scn.history.points)


def test_predict_local_round_trips_through_world_frame():
    scn = straight_scenario(speed=9.0).map_points(Pose([40.0, -7.0], 2.0).to_world)
    local, pose = normalize(scn)
    cmd = "python3 -m scenewarp.predictors.servers cv"
    with PR.Predictor(PR.PredictorHandle("external", cmd)) as ext:
        a = ext.predict_local(local, pose).modes[0].points
    b = PR.Predictor(PR.PredictorHandle("cv")).predict_local(local, pose).modes[0].points
    assert np.max(np.abs(a - b)) <= 1e-9
