import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenewarp import physics as P
from scenewarp import transforms as T
from scenewarp.scene_model import Scenario, Scene, Trajectory, derive_drivable_area

from conftest import arc_lane, straight_scenario


def test_circumradius_examples():
    assert math.isclose(P.circumradius((10, 0), (0, 10), (-10, 0)), 10.0, rel_tol=1e-12)
    assert P.circumradius((0, 0), (1, 0), (2, 0)) == math.inf
    assert math.isclose(P.circumradius((0, 0), (1, 1), (2, 0)), 1.0, rel_tol=1e-12)


def test_circumradius_duplicate_points():
    with pytest.raises(ValueError):
        P.circumradius((0, 0), (0, 0), (1, 1))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 500), st.floats(0, 2 * math.pi), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_circumradius_recovers_circle(r, t0, d1, d2):
    pts = [(r * math.cos(t), r * math.sin(t)) for t in (t0, t0 + d1, t0 + d1 + d2)]
    assert math.isclose(P.circumradius(*pts), r, rel_tol=1e-6)


def test_min_radius_straight_is_inf(straight):
    assert P.min_radius(straight.scene) == math.inf


def test_min_radius_single_arc():
    scene = Scene((arc_lane(20.0, 2.0),))
    assert abs(P.min_radius(scene) - 20.0) <= 0.02 * 20.0


def test_min_radius_two_arcs():
    scene = Scene((arc_lane(50.0, 1.5, center=(200, 0)), arc_lane(20.0, 2.0)))
    assert abs(P.min_radius(scene) - 20.0) <= 0.02 * 20.0


def test_max_feasible_speed_examples():
    assert math.isclose(P.max_feasible_speed(20.0), math.sqrt(137.34), rel_tol=1e-12)
    assert math.isclose(P.max_feasible_speed(20.0), 11.719, abs_tol=5e-4)
    assert P.max_feasible_speed(math.inf) == math.inf
    assert math.isclose(P.max_feasible_speed(1e-4), 0.0262, abs_tol=1e-4)
    with pytest.raises(ValueError):
        P.max_feasible_speed(0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        P.PhysicsConfig(mu=0.0)


def arc_scenario(radius=20.0, speed=20.0, agents=()):
    """Arc lane with a straight history; only the lane geometry matters for the bound."""
    hist = np.column_stack([np.full(20, radius), np.arange(-19, 1) * speed * 0.1 - 60.0])
    scene = derive_drivable_area(Scene((arc_lane(radius, 2.5, n=400),)))
    return Scenario(scene, Trajectory(hist, 0.1), agents=tuple(agents), id="arc")


def test_slow_down_to_feasible_speed():
    scn = arc_scenario(20.0, 20.0)
    v_max = P.max_feasible_speed(P.min_radius(scn.scene))
    out = P.enforce_feasibility(scn)
    speeds = out.history.speeds()
    assert np.allclose(speeds, v_max, rtol=1e-12)
    assert math.isclose(v_max, 11.719, rel_tol=0.02)
    assert np.array_equal(out.history.points[-1], scn.history.points[-1])
    # lambda-scaling oracle
    lam = v_max / 20.0
    anchor = scn.history.points[-1]
    want = anchor + lam * (scn.history.points - anchor)
    assert np.max(np.abs(out.history.points - want)) <= 1e-9


def test_straight_scene_unchanged(straight):
    fast = straight_scenario(speed=60.0)
    assert P.enforce_feasibility(fast) is fast


def test_slow_history_bitwise_unchanged():
    scn = arc_scenario(20.0, 5.0)
    out = P.enforce_feasibility(scn)
    assert out is scn


def test_agents_share_lambda_and_anchor_index():
    agent = Trajectory(np.column_stack([np.full(50, 25.0), np.linspace(-70, 30, 50)]), 0.1)
    scn = arc_scenario(20.0, 20.0, agents=(agent,))
    lam = P.speed_scale(scn)
    out = P.enforce_feasibility(scn)
    a0, a1 = scn.agents[0].points, out.agents[0].points
    assert np.array_equal(a1[19], a0[19])
    assert np.allclose(a1 - a0[19], lam * (a0 - a0[19]), atol=1e-12)


def random_scenario(rng):
    radius = float(rng.uniform(5, 200))
    speed = float(rng.uniform(0.0, 40.0))
    hist = np.column_stack([np.full(20, radius), np.arange(-19, 1) * speed * 0.1 - 60.0])
    hist = hist + rng.normal(0, 0.3, size=hist.shape) * (speed > 0)
    lanes = (arc_lane(radius, float(rng.uniform(0.5, 3.0)), n=int(rng.integers(50, 300))),)
    agents = (Trajectory(np.cumsum(rng.normal(0, 2, size=(50, 2)), axis=0), 0.1),)
    return Scenario(Scene(lanes, (np.array([[-500, -500], [500, -500], [500, 500], [-500, 500.0]]),)),
                    Trajectory(hist, 0.1), agents=agents, id="r")


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feasibility_invariants(seed):
    scn = random_scenario(np.random.default_rng(seed))
    v_max = P.max_feasible_speed(P.min_radius(scn.scene))
    once = P.enforce_feasibility(scn)
    twice = P.enforce_feasibility(once)
    assert once.history.max_speed() <= v_max * (1 + 1e-9)
    assert np.max(np.abs(once.history.points[-1] - scn.history.points[-1])) <= 1e-12
    assert np.array_equal(once.history.points, twice.history.points)
    assert np.array_equal(once.agents[0].points, twice.agents[0].points)


def _accel(traj):
    v = np.diff(traj.points, axis=0) / traj.dt
    return np.hypot(*np.diff(v, axis=0).T) / traj.dt


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scaling_bounds_acceleration(seed):
    scn = random_scenario(np.random.default_rng(seed))
    lam = P.speed_scale(scn)
    after = _accel(P.enforce_feasibility(scn).history)
    before = _accel(scn.history)
    # displacements shrink by lam at a fixed dt, so accelerations shrink by exactly lam
    assert np.all(after <= lam * before * (1 + 1e-9) + 1e-9)
    assert np.max(after) <= np.max(before) + 1e-9


def test_min_radius_weakly_decreases_with_power():
    base = straight_scenario()
    dense = Scenario(T.densify_scene(base.scene), base.history)
    radii = []
    for power in (1, 2, 4, 6, 8, 9):
        spec = T.make_spec(T.SMOOTH_TURN, [10, power / 3000, 3])
        radii.append(P.min_radius(T.warp_scenario(dense, spec, densified=True).scene))
    assert all(b <= a * (1 + 1e-9) for a, b in zip(radii, radii[1:]))
    assert radii[-1] < radii[0]
