import math

import numpy as np
import pytest

from uavcollect import bounds, flight, oma
from uavcollect.model import PropulsionParams, Scenario, propulsion_power, trajectory_energy

# v / P(v) is maximized here for the default propulsion parameters (dense scan, 1e-5 m/s grid)
MR_SPEED = 18.3


def test_hover_bound_closed_form():
    scn = Scenario(devices=[[0, 0], [1, 1], [2, 2]], device_energy=10.0, uav_energy=2e4)
    assert bounds.hover_upper_bound(scn) == pytest.approx(10 * 1e5 / 1e4 / math.log(2), abs=1e-12)
    assert bounds.hover_upper_bound(scn) == pytest.approx(144.2695, abs=1e-3)


def test_hover_bound_zero_and_linear():
    scn = Scenario(devices=[[0, 0], [1, 1]], device_energy=[0.0, 5.0], uav_energy=2e4)
    assert bounds.hover_upper_bound(scn) == 0.0
    scn = Scenario(devices=[[0, 0], [1, 1]], device_energy=[3.0, 5.0], uav_energy=2e4)
    double = scn.replace(device_energy=scn.device_energy * 2)
    assert bounds.hover_upper_bound(double) == pytest.approx(2 * bounds.hover_upper_bound(scn), rel=1e-15)


def test_hover_throughput_increases_to_bound():
    e, g = 10.0, 10.0
    t = np.logspace(-3, 6, 2000)
    f = bounds.hover_throughput(t, e, g)
    assert np.all(np.diff(f) >= -1e-12)
    limit = e * g / math.log(2)
    assert bounds.hover_throughput(1e3 * e * g, e, g) == pytest.approx(limit, rel=1e-2)


def test_max_range_speed_is_local_optimum():
    p = PropulsionParams()
    v = bounds.max_range_speed(p, 30.0)
    assert 0 < v <= 30
    ratio = lambda s: s / propulsion_power(s, p)
    assert ratio(v) >= ratio(v + 0.01) and ratio(v) >= ratio(v - 0.01)
    assert v == pytest.approx(MR_SPEED, abs=0.05)


def test_max_range_speed_against_scan():
    p = PropulsionParams()
    grid = np.linspace(1e-3, 30, 300_001)
    best = grid[np.argmax(grid / propulsion_power(grid, p))]
    assert bounds.max_range_speed(p, 30.0) == pytest.approx(best, abs=1e-4)


def test_more_drag_slows_max_range_speed():
    p = PropulsionParams()
    dragged = PropulsionParams(fuselage_drag_ratio=2 * p.fuselage_drag_ratio)
    assert bounds.max_range_speed(dragged, 30.0) < bounds.max_range_speed(p, 30.0)


def test_speed_cap_binds():
    assert bounds.max_range_speed(PropulsionParams(), 10.0) == 10.0
    with pytest.raises(ValueError):
        bounds.max_range_speed(PropulsionParams(), 0.0)


SCN = Scenario(devices=[[120.0, 380.0], [420.0, 150.0], [260.0, 240.0]], device_energy=10.0, uav_energy=12e3, delta=50.0)


@pytest.mark.parametrize("scheme", ["oma1", "oma2", "noma"])
def test_straight_line_solution(scheme):
    rep = bounds.straight_line_solution(SCN, scheme)
    rel = rep.trajectory.waypoints - SCN.u_start
    span = SCN.u_end - SCN.u_start
    assert np.abs(rel @ np.array([span[1], -span[0]])).max() / np.linalg.norm(span) < 1e-6
    assert rep.audit.ok
    assert rep.eta < bounds.hover_upper_bound(SCN)


def test_straight_line_without_energy_slack_flies_near_mr_speed():
    cost = trajectory_energy(flight.straight_trajectory(SCN), SCN.propulsion)
    scn = SCN.replace(uav_energy=cost * (1 + 1e-6))
    rep = bounds.straight_line_solution(scn, "oma2")
    v = rep.trajectory.speeds
    assert np.abs(v - bounds.max_range_speed(scn.propulsion, scn.v_max)).max() < 0.5


def test_straight_line_unknown_scheme():
    with pytest.raises(ValueError):
        bounds.straight_line_solution(SCN, "tdma")


def test_oma_stays_below_hover_bound():
    for v in oma.VARIANTS:
        assert oma.solve(SCN, v).eta < bounds.hover_upper_bound(SCN)
