import numpy as np
import pytest

from uavcollect import conic, flight, oma
from uavcollect.bounds import max_range_speed
from uavcollect.model import Scenario, oma_throughput, trajectory_energy
from uavcollect.report import InfeasibleBudget, SubproblemFailure

DEVICES = [[120.0, 380.0], [420.0, 150.0], [260.0, 240.0]]


def scenario(**kw):
    base = dict(devices=DEVICES, device_energy=10.0, uav_energy=12e3, delta=50.0)
    base.update(kw)
    return Scenario(**base)


def solve_once(prog):
    sol = conic.solve(prog)
    assert sol.status == "optimal"
    return sol


# ------------------------------------------------------------ initialization

def test_init_matches_described_start():
    scn = Scenario(devices=DEVICES, device_energy=10.0, uav_energy=20e3)
    local = oma.init_solution(scn)
    traj = local.trajectory
    assert traj.n_segments == 36
    v_mr = max_range_speed(scn.propulsion, scn.v_max)
    np.testing.assert_allclose(traj.durations, traj.segment_lengths / v_mr, rtol=1e-12)
    assert np.ptp(traj.durations) == 0
    np.testing.assert_array_equal(local.time_share, np.tile(traj.durations / 3, (3, 1)))
    expected = min(scn.p_max, 10.0 / local.time_share[0].sum())
    np.testing.assert_allclose(local.power, expected)
    d = ((traj.waypoints[None, :-1] - scn.devices[:, None]) ** 2).sum(-1) + scn.altitude**2
    np.testing.assert_allclose(local.theta**2, local.time_share * np.log2(1 + scn.gamma0 * local.power / d))


def test_init_clamps_power_with_large_storage():
    local = oma.init_solution(scenario(device_energy=1e6))
    assert np.all(local.power == 0.1)


def test_init_reports_deficit():
    scn = scenario(uav_energy=1000.0)
    with pytest.raises(InfeasibleBudget) as err:
        oma.init_solution(scn)
    assert err.value.deficit > 0
    assert "deficit" in str(err.value)


def test_unknown_variant():
    with pytest.raises(ValueError):
        oma.init_solution(scenario(), "oma3")


# ------------------------------------------------------------ trajectory step

def test_trajectory_step_improves_on_expansion_point():
    scn = scenario()
    local = oma.init_solution(scn)
    prog, extract = oma.build_trajectory_subproblem(local, scn)
    sol = solve_once(prog)
    assert sol.objective >= local.eta - 1e-7
    nxt = extract(sol)
    assert nxt.eta >= sol.objective - 1e-6  # bounds are lower bounds
    assert trajectory_energy(nxt.trajectory, scn.propulsion) <= scn.uav_energy * (1 + 1e-6)


def test_no_energy_slack_keeps_path_straight():
    probe = scenario()
    cost = trajectory_energy(flight.straight_trajectory(probe), probe.propulsion)
    scn = scenario(uav_energy=cost * (1 + 1e-9))
    local = oma.init_solution(scn)
    prog, extract = oma.build_trajectory_subproblem(local, scn)
    traj = extract(solve_once(prog)).trajectory
    line = (scn.u_end - scn.u_start) / scn.path_length
    rel = traj.waypoints - scn.u_start
    offset = np.abs(rel[:, 0] * line[1] - rel[:, 1] * line[0])
    assert offset.max() <= scn.delta


# ------------------------------------------------------------ power step

def test_power_step_uses_full_power_when_energy_is_plentiful():
    scn = scenario(device_energy=1e4)
    local = oma.init_solution(scn)
    prog, extract = oma.build_power_subproblem(local, scn)
    nxt = extract(solve_once(prog))
    awake = nxt.time_share > 2 * flight.TAU_MIN
    assert awake.any()
    np.testing.assert_allclose(nxt.power[awake], scn.p_max, atol=1e-5)


def test_power_step_with_empty_batteries():
    scn = scenario(device_energy=0.0)
    local = oma.init_solution(scn)
    prog, extract = oma.build_power_subproblem(local, scn)
    sol = solve_once(prog)
    nxt = extract(sol)
    assert abs(sol.objective) < 1e-6
    assert np.all(nxt.power < 1e-6)


def test_equal_split_variant():
    scn = scenario()
    local = oma.init_solution(scn, "oma1")
    prog, extract = oma.build_power_subproblem(local, scn, "oma1")
    nxt = extract(solve_once(prog))
    np.testing.assert_allclose(nxt.time_share, np.broadcast_to(nxt.time_share[0], nxt.time_share.shape), atol=1e-7)


# ------------------------------------------------------------ full solve

@pytest.fixture(scope="module")
def solved():
    scn = scenario()
    return scn, {v: oma.solve(scn, v) for v in oma.VARIANTS}


def test_solve_reports(solved):
    scn, reps = solved
    for rep in reps.values():
        assert rep.converged and rep.is_monotone()
        assert rep.audit.ok
        q = oma_throughput(rep.trajectory, rep.allocation, scn)
        assert rep.eta == pytest.approx(q.min(), rel=1e-12)
        assert abs(rep.eta - rep.eta_solver) <= 1e-3 * rep.eta
        assert rep.trace[0] == pytest.approx(oma.init_solution(scn, rep.scheme).eta)


def test_adaptive_split_beats_equal_split(solved):
    _, reps = solved
    assert reps["oma2"].eta >= reps["oma1"].eta - 1e-3


def test_straight_variant_is_collinear(solved):
    scn, reps = solved
    rep = oma.solve(scn, "oma2", straight=True)
    rel = rep.trajectory.waypoints - scn.u_start
    span = scn.u_end - scn.u_start
    assert np.abs(rel[:, 0] * span[1] - rel[:, 1] * span[0]).max() / np.linalg.norm(span) < 1e-6
    assert rep.scheme == "straight-oma2"
    assert rep.eta <= reps["oma2"].eta + 1e-3


class FailingBackend:
    """Solves the first ``ok`` programs, then reports a numerical failure."""

    def __init__(self, ok):
        self.ok = ok

    def solve(self, prog, tol):
        if self.ok <= 0:
            return conic.ConicSolution("numerical-limit", None, None, 0, 0.0, "fake")
        self.ok -= 1
        return conic.solve(prog, tol)


def test_failure_keeps_last_feasible_point():
    scn = scenario()
    with pytest.raises(SubproblemFailure) as err:
        oma.solve(scn, backend=FailingBackend(3))
    exc = err.value
    assert exc.status == "numerical-limit"
    assert exc.iteration == 2 and exc.subproblem == "power"
    assert exc.report.audit.ok
    assert exc.report.eta > exc.report.trace[0]


def test_conic_dumps_written(tmp_path):
    scn = scenario()
    oma.solve(scn, max_iter=1, dump_dir=str(tmp_path))
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["oma2_0001_oma-trajectory.conic", "oma2_0002_oma-power.conic"]
    prog = conic.loads((tmp_path / files[0]).read_text())
    assert conic.solve(prog).status == "optimal"
