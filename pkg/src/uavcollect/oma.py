"""Max-min throughput with orthogonal access: alternating trajectory / power steps.

``variant`` is ``"oma2"`` (adaptive time split per segment) or ``"oma1"``
(every device gets the same share of each segment).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ao, flight, taylor
from .conic import ConicProgram, add_hypograph_log_affine, add_rsoc, add_soc, affine_sum
from .flight import TAU_MIN
from .model import OmaAllocation, Scenario, Trajectory, oma_rates, path_loss_matrix
from .report import SolveReport

VARIANTS = ("oma1", "oma2")


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return variant


@dataclass(frozen=True, eq=False)
class OmaLocalPoint:
    trajectory: Trajectory
    time_share: np.ndarray  # tau[k, n]
    power: np.ndarray  # p[k, n]
    theta: np.ndarray  # sqrt(tau * rate)
    omega: np.ndarray  # induced-power time slack per segment
    eps: np.ndarray  # sqrt(tau * p)

    @classmethod
    def from_raw(cls, traj: Trajectory, time_share, power, scn: Scenario) -> "OmaLocalPoint":
        tau = np.maximum(np.asarray(time_share, dtype=float), 0.0)
        p = np.clip(np.asarray(power, dtype=float), 0.0, scn.p_max)
        theta = np.sqrt(tau * oma_rates(traj, p, scn))
        return cls(traj, tau, p, theta, flight.omega_of(traj, scn), np.sqrt(tau * p))

    @property
    def allocation(self) -> OmaAllocation:
        return OmaAllocation(self.time_share, self.power)

    @property
    def per_device(self) -> np.ndarray:
        return np.sum(self.theta**2, axis=1)

    @property
    def eta(self) -> float:
        return float(self.per_device.min())


def init_solution(scn: Scenario, variant: str = "oma2") -> OmaLocalPoint:
    """Straight flight at max-range speed, equal time split, energy spread evenly."""
    _check_variant(variant)
    traj = flight.straight_trajectory(scn)
    k = scn.n_devices
    tau = np.tile(traj.durations / k, (k, 1))
    p = np.minimum(scn.p_max, scn.device_energy / tau.sum(axis=1))[:, None] * np.ones_like(tau)
    return OmaLocalPoint.from_raw(traj, tau, p, scn)


def _objective_rows(prog: ConicProgram, eta, theta, theta0) -> None:
    for k in range(theta.shape[0]):
        prog.add_ge(affine_sum(taylor.square_lb(theta[k, n], theta0[k, n]) for n in range(theta.shape[1])), eta)


def _time_rows(prog: ConicProgram, tau, T, variant: str) -> None:
    k_dev, n_seg = tau.shape
    for n in range(n_seg):
        prog.add_le(affine_sum(tau[:, n]), T[n])
        if variant == "oma1":
            for k in range(1, k_dev):
                prog.add_eq(tau[k, n] - tau[0, n])


def distance_rate_row(prog: ConicProgram, r, u_n, w, dist0: float, gp: float, h2: float) -> None:
    """r <= tangent (in squared horizontal distance) of log2(1 + gp / (||u_n - w||^2 + h2)) at dist0."""
    r0 = taylor.rate_over_distance(dist0, gp, h2)
    phi = taylor.rate_distance_slope(dist0, gp, h2)
    diff = [u_n[j] - w[j] for j in range(2)]
    if phi == 0.0:
        prog.add_le(r, r0)
    elif all(d.is_constant() for d in diff):
        prog.add_le(r, taylor.rate_over_distance_lb(sum(d.const**2 for d in diff), dist0, gp, h2))
    else:
        # phi ||u - w||^2 <= r0 + phi dist0 - r
        root = np.sqrt(phi)
        add_rsoc(prog, [root * d for d in diff], r0 + phi * dist0 - r, 1.0)


def build_trajectory_subproblem(local: OmaLocalPoint, scn: Scenario, variant: str = "oma2", straight: bool = False):
    """Waypoints, durations and time shares with powers frozen.

    Returns ``(program, extract)``; ``extract(solution)`` gives the next local point.
    """
    _check_variant(variant)
    traj0 = local.trajectory
    k_dev, n_seg = local.time_share.shape
    h2 = scn.altitude**2
    prog = ConicProgram("oma-trajectory")
    eta = prog.add_var("eta", start=local.eta)
    u = flight.add_waypoints(prog, scn, traj0, straight)
    T = flight.add_durations(prog, traj0)
    omega = flight.add_omega(prog, scn, traj0)
    tau = prog.add_vars((k_dev, n_seg), "tau", lb=TAU_MIN, start=np.maximum(local.time_share, TAU_MIN))
    theta = prog.add_vars((k_dev, n_seg), "theta", lb=0.0, start=local.theta)
    r = prog.add_vars((k_dev, n_seg), "r", start=oma_rates(traj0, local.power, scn))

    dist0 = path_loss_matrix(traj0, scn) - h2
    for k in range(k_dev):
        for n in range(n_seg):
            distance_rate_row(prog, r[k, n], u[n], scn.devices[k], dist0[k, n], scn.gamma0 * local.power[k, n], h2)
            add_rsoc(prog, [theta[k, n]], tau[k, n], r[k, n])
        prog.add_le(affine_sum(tau[k, n] * local.power[k, n] for n in range(n_seg)), scn.device_energy[k])

    _objective_rows(prog, eta, theta, local.theta)
    _time_rows(prog, tau, T, variant)
    flight.add_free_path_flight(prog, scn, u, T, omega, traj0)
    prog.maximize(eta)

    def extract(sol) -> OmaLocalPoint:
        traj = flight.extract_trajectory(sol, u, T)
        return OmaLocalPoint.from_raw(traj, sol.values(tau), local.power, scn)

    return prog, extract


def build_power_subproblem(local: OmaLocalPoint, scn: Scenario, variant: str = "oma2"):
    """Durations, time shares and powers with the waypoints frozen."""
    _check_variant(variant)
    traj0 = local.trajectory
    k_dev, n_seg = local.time_share.shape
    tau0 = np.maximum(local.time_share, TAU_MIN)
    prog = ConicProgram("oma-power")
    eta = prog.add_var("eta", start=local.eta)
    T = flight.add_durations(prog, traj0)
    omega = flight.add_omega(prog, scn, traj0)
    tau = prog.add_vars((k_dev, n_seg), "tau", lb=TAU_MIN, start=tau0)
    p = prog.add_vars((k_dev, n_seg), "p", lb=0.0, ub=scn.p_max, start=local.power)
    theta = prog.add_vars((k_dev, n_seg), "theta", lb=0.0, start=local.theta)
    r = prog.add_vars((k_dev, n_seg), "r", start=oma_rates(traj0, local.power, scn))
    eps = prog.add_vars((k_dev, n_seg), "eps", lb=0.0, start=np.sqrt(tau0 * local.power))
    eps0 = np.sqrt(tau0 * local.power)

    d = path_loss_matrix(traj0, scn)
    for k in range(k_dev):
        for n in range(n_seg):
            add_hypograph_log_affine(prog, r[k, n], scn.gamma0 / d[k, n], p[k, n])
            add_rsoc(prog, [theta[k, n]], tau[k, n], r[k, n])
            # p <= tangent of eps^2 / tau, multiplied through by tau0 for conditioning
            prog.add_le(tau0[k, n] * p[k, n], tau0[k, n] * taylor.ratio_sq_lb(eps[k, n], tau[k, n], eps0[k, n], tau0[k, n]))
        add_soc(prog, float(np.sqrt(scn.device_energy[k])), list(eps[k]))

    _objective_rows(prog, eta, theta, local.theta)
    _time_rows(prog, tau, T, variant)
    flight.add_fixed_path_flight(prog, scn, T, omega, traj0)
    prog.maximize(eta)

    def extract(sol) -> OmaLocalPoint:
        traj = Trajectory(traj0.waypoints, sol.values(T))
        return OmaLocalPoint.from_raw(traj, sol.values(tau), sol.values(p), scn)

    return prog, extract


def solve(
    scn: Scenario,
    variant: str = "oma2",
    straight: bool = False,
    max_iter: int = ao.DEFAULT_MAX_ITER,
    tol: float | None = None,
    backend=None,
    dump_dir: str | None = None,
    init: OmaLocalPoint | None = None,
) -> SolveReport:
    """Alternate the trajectory and power steps until the fractional gain drops below ``tol``."""
    _check_variant(variant)
    local = init_solution(scn, variant) if init is None else init
    steps = [
        ("trajectory", ao.conic_step(lambda pt: build_trajectory_subproblem(pt, scn, variant, straight))),
        ("power", ao.conic_step(lambda pt: build_power_subproblem(pt, scn, variant))),
    ]
    scheme = f"straight-{variant}" if straight else variant
    return ao.run(scheme, scn, local, steps, tol=tol, max_iter=max_iter, backend=backend, dump_dir=dump_dir)
