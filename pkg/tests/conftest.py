import math
import sys
from pathlib import Path

import numpy as np
import pytest

from scenewarp.scene_model import Scenario, Scene, Trajectory, derive_drivable_area

FIXTURES = Path(__file__).parent / "fixtures"


def straight_scenario(speed=10.0, length=120.0, behind=60.0, sid="s0", lane_width=3.5, agents=(), n_hist=20,
                      n_fut=30, dt=0.1, derive=True):
    """Ego on the x axis ending at the origin, lane from -behind to length."""
    lane = np.column_stack([np.linspace(-behind, length, int(behind + length) + 1), np.zeros(int(behind + length) + 1)])
    k = np.arange(-(n_hist - 1), n_fut + 1) * speed * dt
    track = np.column_stack([k, np.zeros_like(k)])
    scene = Scene((lane,), (), lane_width)
    if derive:
        scene = derive_drivable_area(scene)
    return Scenario(scene, Trajectory(track[:n_hist], dt), Trajectory(track[n_hist:], dt), tuple(agents), sid)


def arc_lane(radius, sweep, n=200, center=(0.0, 0.0)):
    th = np.linspace(-sweep / 2, sweep / 2, n)
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def python_cmd(script: str) -> str:
    return f"{sys.executable} {FIXTURES / script}"


@pytest.fixture
def straight():
    return straight_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        terminalreporter.write_line(ACCEPTANCE.get(n, f"FAIL criterion {n}: did not run to completion"))
