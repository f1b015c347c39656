"""Flight-side rows shared by the OMA and NOMA subproblems.

Covers waypoint variables, the segment-length and speed caps, and the
convexified UAV energy budget (blade and parasite terms as perspective
cones, the induced term through the time slack ``omega``).
"""
from __future__ import annotations

import numpy as np

from . import taylor
from .bounds import max_range_speed
from .conic import Affine, ConicProgram, add_cubic_over_square, add_quad_over_lin, add_quartic_over_square, add_soc
from .model import Scenario, Trajectory, induced_time, trajectory_energy
from .report import InfeasibleBudget

TAU_MIN = 1e-6  # floor on every transmission window, keeps rotated cones off their apex
T_MIN = 1e-6


def straight_trajectory(scn: Scenario) -> Trajectory:
    """Equal segments on the u_start -> u_end line, flown at max-range speed."""
    n = scn.n_segments
    v_mr = max_range_speed(scn.propulsion, scn.v_max)
    frac = np.linspace(0.0, 1.0, n + 1)[:, None]
    waypoints = scn.u_start + frac * (scn.u_end - scn.u_start)
    seg = scn.path_length / n
    durations = np.full(n, max(seg, 1e-3 * scn.delta) / v_mr)
    traj = Trajectory(waypoints, durations)
    required = trajectory_energy(traj, scn.propulsion)
    if required > scn.uav_energy:
        raise InfeasibleBudget(required, scn.uav_energy)
    return traj


def omega_of(traj: Trajectory, scn: Scenario) -> np.ndarray:
    return induced_time(traj.segment_lengths, traj.durations, scn.propulsion.rotor_induced_v)


def add_waypoints(prog: ConicProgram, scn: Scenario, local: Trajectory, straight: bool = False) -> np.ndarray:
    """Waypoint expressions u[n] (shape (N + 1, 2)); endpoints are constants."""
    n_seg = local.n_segments
    u = np.empty((n_seg + 1, 2), dtype=object)
    for j in range(2):
        u[0, j] = Affine(const=scn.u_start[j])
        u[n_seg, j] = Affine(const=scn.u_end[j])
    if n_seg == 1:
        return u
    if straight:
        span = scn.u_end - scn.u_start
        denom = float(span @ span)
        local_frac = (local.waypoints[1:-1] - scn.u_start) @ span / denom if denom > 0 else np.zeros(n_seg - 1)
        frac = prog.add_vars(n_seg - 1, "frac", lb=0.0, ub=1.0, start=local_frac)
        for i in range(n_seg - 2):
            prog.add_ge(frac[i + 1], frac[i])
        for i in range(n_seg - 1):
            for j in range(2):
                u[i + 1, j] = scn.u_start[j] + span[j] * frac[i]
    else:
        free = prog.add_vars((n_seg - 1, 2), "u", start=local.waypoints[1:-1])
        u[1:-1] = free
    return u


def energy_row(prog: ConicProgram, scn: Scenario, T, omega, blade_extra, parasite) -> None:
    """Total propulsion energy <= E_U, scaled by 1/E_U."""
    p = scn.propulsion
    total = Affine()
    for n in range(len(T)):
        total = total + p.p0_blade * T[n] + p.p_induced * omega[n]
        if blade_extra[n] is not None:
            total = total + (3 * p.p0_blade / p.tip_speed**2) * blade_extra[n]
        if parasite[n] is not None:
            total = total + p.parasite_coeff * parasite[n]
    prog.add_le(total / scn.uav_energy, 1.0)


def add_free_path_flight(prog: ConicProgram, scn: Scenario, u, T, omega, local: Trajectory) -> None:
    """Mobility, energy and induced-slack rows when waypoints are decision variables."""
    v0 = scn.propulsion.rotor_induced_v
    lengths = local.segment_lengths
    dur = local.durations
    om0 = omega_of(local, scn)
    du0 = np.diff(local.waypoints, axis=0)
    s = prog.add_vars(local.n_segments, "s", start=lengths)
    a = prog.add_vars(local.n_segments, "blade", start=lengths**2 / dur)
    b = prog.add_vars(local.n_segments, "parasite", start=lengths**3 / dur**2)
    # the relaxed induced slack is tight at the expansion point
    assert np.allclose(taylor.induced_slack_rhs_lb(om0, du0, om0, du0, v0), dur**4 / om0**2, rtol=1e-9, atol=0)
    for n in range(local.n_segments):
        du = [u[n + 1, j] - u[n, j] for j in range(2)]
        add_soc(prog, s[n], du)
        prog.add_le(s[n], scn.delta)
        prog.add_le(s[n], scn.v_max * T[n])
        add_quad_over_lin(prog, s[n], a[n], T[n])
        add_cubic_over_square(prog, b[n], s[n], T[n])
        beta = (
            taylor.square_lb(omega[n], om0[n])
            - float(du0[n] @ du0[n]) / v0**2
            + (2.0 / v0**2) * (du0[n, 0] * du[0] + du0[n, 1] * du[1])
        )
        add_quartic_over_square(prog, T[n], omega[n], beta, start=dur[n] ** 2 / om0[n], name=f"q[{n}]")
    energy_row(prog, scn, T, omega, a, b)


def add_fixed_path_flight(prog: ConicProgram, scn: Scenario, T, omega, local: Trajectory) -> None:
    """Same rows with the waypoints (hence segment lengths) frozen."""
    v0 = scn.propulsion.rotor_induced_v
    lengths = local.segment_lengths
    dur = local.durations
    om0 = omega_of(local, scn)
    blade = [None] * local.n_segments
    parasite = [None] * local.n_segments
    for n in range(local.n_segments):
        s = float(lengths[n])
        if s > 0:
            prog.add_ge(T[n], s / scn.v_max)
            blade[n] = prog.add_var(f"blade[{n}]", start=s**2 / dur[n])
            parasite[n] = prog.add_var(f"parasite[{n}]", start=s**3 / dur[n] ** 2)
            add_quad_over_lin(prog, s, blade[n], T[n])
            add_cubic_over_square(prog, parasite[n], s, T[n])
        beta = taylor.square_lb(omega[n], om0[n]) + s**2 / v0**2
        add_quartic_over_square(prog, T[n], omega[n], beta, start=dur[n] ** 2 / om0[n], name=f"q[{n}]")
    energy_row(prog, scn, T, omega, blade, parasite)


def add_durations(prog: ConicProgram, local: Trajectory):
    return prog.add_vars(local.n_segments, "T", lb=T_MIN, start=local.durations)


def add_omega(prog: ConicProgram, scn: Scenario, local: Trajectory):
    return prog.add_vars(local.n_segments, "omega", lb=0.0, start=omega_of(local, scn))


def extract_trajectory(sol, u, T) -> Trajectory:
    waypoints = sol.values(u)
    durations = sol.values(T)
    return Trajectory(waypoints, durations)
