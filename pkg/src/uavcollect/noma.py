"""Max-min throughput with uplink NOMA and SIC.

One outer round updates the trajectory (powers and decoding order frozen),
then powers and time (waypoints frozen), then the per-segment decoding
order through a penalized linear program whose relaxed indicators are
pushed to binary values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ao, flight, oma, taylor
from .conic import ConicProgram, add_hypograph_log_affine, add_rsoc, add_soc, affine_sum
from .flight import TAU_MIN
from .model import (
    LOG2E,
    DecodingOrder,
    NomaAllocation,
    OmaAllocation,
    Scenario,
    Trajectory,
    noma_throughput,
    path_loss_matrix,
)
from .report import SolveReport

P_SILENT = 1e-14  # powers at or below this are treated as exactly zero


class PenaltyNotExact(RuntimeError):
    """Relaxed decoding indicators stayed fractional after every penalty escalation."""

    def __init__(self, worst: float, lam: float):
        super().__init__(f"max |a^2 - a| = {worst:.3g} after raising the penalty to {lam:.3g}")
        self.worst = worst
        self.lam = lam


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float | None = None  # None: ten times the hover throughput scale of the scenario
    binary_tol: float = 1e-4
    max_inner_iters: int = 50
    lambda_growth: float = 10.0
    max_escalations: int = 3
    start: str = "center"  # "center" (all indicators 1/2) or "incumbent"

    def __post_init__(self):
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.lambda_growth >= 1:
            raise ValueError("lambda_growth must be >= 1")
        if not 0 < self.binary_tol < 0.25:
            raise ValueError("binary_tol must lie in (0, 0.25)")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")
        if self.start not in ("center", "incumbent"):
            raise ValueError("start must be 'center' or 'incumbent'")

    def resolve_lambda(self, scn: Scenario) -> float:
        if self.lam is not None:
            return self.lam
        scale = float(np.max(scn.device_energy)) * scn.gamma_hover / math.log(2.0)
        return max(10.0 * scale, 1.0)


@dataclass(frozen=True, eq=False)
class NomaLocalPoint:
    trajectory: Trajectory
    comm_time: np.ndarray  # tau[n]
    power: np.ndarray  # p[k, n]
    order: DecodingOrder
    dist: np.ndarray  # d[k, n], squared 3-D distance
    signal: np.ndarray  # S[k, n] = d / (gamma0 p), inf when silent
    interference: np.ndarray  # I[k, n] = 1 + sum of interfering SNRs
    theta: np.ndarray
    omega: np.ndarray
    eps: np.ndarray

    @classmethod
    def from_raw(cls, traj: Trajectory, comm_time, power, order: DecodingOrder, scn: Scenario) -> "NomaLocalPoint":
        tau = np.maximum(np.asarray(comm_time, dtype=float), 0.0)
        p = np.clip(np.asarray(power, dtype=float), 0.0, scn.p_max)
        d = path_loss_matrix(traj, scn)
        snr = scn.gamma0 * p / d
        interference = 1.0 + np.einsum("nmk,mn->kn", order.alpha, snr)
        with np.errstate(divide="ignore"):
            signal = np.where(p > P_SILENT, d / (scn.gamma0 * np.maximum(p, P_SILENT)), np.inf)
        theta = np.sqrt(tau[None, :] * np.log2(1 + snr / interference))
        eps = np.sqrt(tau[None, :] * p)
        return cls(traj, tau, p, order, d, signal, interference, theta, flight.omega_of(traj, scn), eps)

    @property
    def allocation(self) -> NomaAllocation:
        return NomaAllocation(self.comm_time, self.power, self.order)

    @property
    def active(self) -> np.ndarray:
        return self.power > P_SILENT

    @property
    def per_device(self) -> np.ndarray:
        return np.sum(self.theta**2, axis=1)

    @property
    def eta(self) -> float:
        return float(self.per_device.min())

    def with_order(self, order: DecodingOrder, scn: Scenario) -> "NomaLocalPoint":
        return NomaLocalPoint.from_raw(self.trajectory, self.comm_time, self.power, order, scn)


def init_order(traj: Trajectory, scn: Scenario) -> DecodingOrder:
    """Nearest device decoded first, farthest last (interference-free); ties by index."""
    d = path_loss_matrix(traj, scn)
    idx = np.arange(scn.n_devices)
    return DecodingOrder.from_sequences([list(np.lexsort((idx, d[:, n]))) for n in range(traj.n_segments)])


def init_solution(scn: Scenario) -> NomaLocalPoint:
    """Straight max-range flight, every device on for the whole flight, energy spread evenly."""
    traj = flight.straight_trajectory(scn)
    tau = traj.durations.copy()
    p = np.minimum(scn.p_max, scn.device_energy / tau.sum())[:, None] * np.ones((scn.n_devices, traj.n_segments))
    return NomaLocalPoint.from_raw(traj, tau, p, init_order(traj, scn), scn)


def _objective_rows(prog, eta, theta, theta0) -> None:
    for k in range(theta.shape[0]):
        prog.add_ge(affine_sum(taylor.square_lb(theta[k, n], theta0[k, n]) for n in range(theta.shape[1])), eta)


def _rate_rows(prog, local: NomaLocalPoint, tau, s_hat, interference, direct):
    """theta^2 <= tau r, r <= tangent of log2(1 + 1/(S I)); S = S0 * s_hat.  Returns theta.

    Interference-free slots skip the S, I form: ``direct[k, n](r)`` adds the
    same bound the OMA subproblems use for them.
    """
    k_dev, n_seg = local.power.shape
    theta = np.empty((k_dev, n_seg), dtype=object)
    for k, n in np.ndindex(k_dev, n_seg):
        if not local.active[k, n]:
            theta[k, n] = 0.0
            continue
        s0, i0 = local.signal[k, n], local.interference[k, n]
        r0 = taylor.inv_product_rate(s0, i0)
        theta[k, n] = prog.add_var(f"theta[{k},{n}]", lb=0.0, start=local.theta[k, n])
        r = prog.add_var(f"r[{k},{n}]", start=r0)
        if direct[k, n] is not None:
            direct[k, n](r)
        else:
            gs, gi = taylor.inv_product_rate_grad(s0, i0)
            prog.add_le(r, r0 + gs * s0 * (s_hat[k, n] - 1.0) + gi * (interference[k, n] - i0))
        add_rsoc(prog, [theta[k, n]], tau[n], r)
    return theta


def build_trajectory_subproblem(local: NomaLocalPoint, scn: Scenario, straight: bool = False):
    """Waypoints, durations and the common time with powers and order frozen."""
    traj0 = local.trajectory
    k_dev, n_seg = local.power.shape
    h = scn.altitude
    p0 = local.power
    active = local.active
    alpha = local.order.alpha
    prog = ConicProgram("noma-trajectory")
    eta = prog.add_var("eta", start=local.eta)
    u = flight.add_waypoints(prog, scn, traj0, straight)
    T = flight.add_durations(prog, traj0)
    omega = flight.add_omega(prog, scn, traj0)
    tau = prog.add_vars(n_seg, "tau", lb=TAU_MIN, start=np.maximum(local.comm_time, TAU_MIN))

    s_hat = np.empty((k_dev, n_seg), dtype=object)
    interference = np.empty((k_dev, n_seg), dtype=object)
    direct = np.full((k_dev, n_seg), None, dtype=object)
    inv_d = np.empty((k_dev, n_seg), dtype=object)  # zeta >= H^2 / d for interferers
    for n in range(n_seg):
        u0 = traj0.waypoints[n]
        for m in range(k_dev):
            if not (active[m, n] and np.any((alpha[n, m, :] > 0.5) & active[:, n])):
                continue
            # d <= its tangent in u (a lower bound of the convex ||u - w||^2 + H^2)
            dh0 = local.dist[m, n] / h**2
            inv_d[m, n] = prog.add_var(f"zeta[{m},{n}]", lb=0.0, start=1.0 / dh0)
            dh = prog.add_var(f"dh[{m},{n}]", lb=0.0, start=dh0)
            grad = 2 * (u0 - scn.devices[m])
            lin = local.dist[m, n] + grad[0] * (u[n, 0] - u0[0]) + grad[1] * (u[n, 1] - u0[1])
            prog.add_le(dh, lin / h**2)
            add_rsoc(prog, [1.0], inv_d[m, n], dh)
        for k in range(k_dev):
            if not active[k, n]:
                continue
            interferers = [m for m in range(k_dev) if alpha[n, m, k] > 0.5 and active[m, n]]
            if not interferers:
                direct[k, n] = lambda r, k=k, n=n: oma.distance_rate_row(
                    prog, r, u[n], scn.devices[k], local.dist[k, n] - h**2, scn.gamma0 * p0[k, n], h**2
                )
                continue
            s_hat[k, n] = prog.add_var(f"s_hat[{k},{n}]", lb=0.0, start=1.0)
            # ||(u - w, H)||^2 <= d0 * s_hat, scaled by 1/H
            diff = [(u[n, j] - scn.devices[k, j]) / h for j in range(2)]
            add_rsoc(prog, diff + [1.0], (local.dist[k, n] / h**2) * s_hat[k, n], 1.0)
            terms = [(scn.gamma0 * p0[m, n] / h**2) * inv_d[m, n] for m in interferers]
            interference[k, n] = prog.add_var(f"I[{k},{n}]", lb=1.0, start=local.interference[k, n])
            prog.add_ge(interference[k, n], 1.0 + affine_sum(terms))

    theta = _rate_rows(prog, local, tau, s_hat, interference, direct)
    _objective_rows(prog, eta, theta, local.theta)
    for n in range(n_seg):
        prog.add_le(tau[n], T[n])
    for k in range(k_dev):
        prog.add_le(affine_sum(tau[n] * p0[k, n] for n in range(n_seg)), scn.device_energy[k])
    flight.add_free_path_flight(prog, scn, u, T, omega, traj0)
    prog.maximize(eta)

    def extract(sol) -> NomaLocalPoint:
        traj = flight.extract_trajectory(sol, u, T)
        return NomaLocalPoint.from_raw(traj, sol.values(tau), p0, local.order, scn)

    return prog, extract


def build_power_subproblem(local: NomaLocalPoint, scn: Scenario):
    """Durations, common time and powers with waypoints and order frozen."""
    traj0 = local.trajectory
    k_dev, n_seg = local.power.shape
    active = local.active
    alpha = local.order.alpha
    tau0 = np.maximum(local.comm_time, TAU_MIN)
    prog = ConicProgram("noma-power")
    eta = prog.add_var("eta", start=local.eta)
    T = flight.add_durations(prog, traj0)
    omega = flight.add_omega(prog, scn, traj0)
    tau = prog.add_vars(n_seg, "tau", lb=TAU_MIN, start=tau0)
    p = np.empty((k_dev, n_seg), dtype=object)
    eps = np.empty((k_dev, n_seg), dtype=object)
    s_hat = np.empty((k_dev, n_seg), dtype=object)
    interference = np.empty((k_dev, n_seg), dtype=object)
    direct = np.full((k_dev, n_seg), None, dtype=object)
    for k, n in np.ndindex(k_dev, n_seg):
        if not active[k, n]:
            p[k, n] = 0.0
            continue
        p0 = local.power[k, n]
        p[k, n] = prog.add_var(f"p[{k},{n}]", lb=0.0, ub=scn.p_max, start=p0)
        e0 = math.sqrt(tau0[n] * p0)
        eps[k, n] = prog.add_var(f"eps[{k},{n}]", lb=0.0, start=e0)
        prog.add_le(tau0[n] * p[k, n], tau0[n] * taylor.ratio_sq_lb(eps[k, n], tau[n], e0, tau0[n]))
    for k, n in np.ndindex(k_dev, n_seg):
        if not active[k, n]:
            continue
        interferers = [m for m in range(k_dev) if alpha[n, m, k] > 0.5 and active[m, n]]
        if not interferers:
            # decoded last: the rate is concave in p, keep it exact
            c = scn.gamma0 / local.dist[k, n]
            direct[k, n] = lambda r, c=c, x=p[k, n]: add_hypograph_log_affine(prog, r, c, x)
            continue
        # S p >= d / gamma0 with S = S0 s_hat, i.e. s_hat p >= p0
        s_hat[k, n] = prog.add_var(f"s_hat[{k},{n}]", lb=0.0, start=1.0)
        add_rsoc(prog, [math.sqrt(local.power[k, n])], s_hat[k, n], p[k, n])
        terms = [(scn.gamma0 / local.dist[m, n]) * p[m, n] for m in interferers]
        interference[k, n] = prog.add_var(f"I[{k},{n}]", lb=1.0, start=local.interference[k, n])
        prog.add_ge(interference[k, n], 1.0 + affine_sum(terms))

    theta = _rate_rows(prog, local, tau, s_hat, interference, direct)
    _objective_rows(prog, eta, theta, local.theta)
    for k in range(k_dev):
        live = [eps[k, n] for n in range(n_seg) if active[k, n]]
        if live:
            add_soc(prog, float(np.sqrt(scn.device_energy[k])), live)
    for n in range(n_seg):
        prog.add_le(tau[n], T[n])
    flight.add_fixed_path_flight(prog, scn, T, omega, traj0)
    prog.maximize(eta)

    def extract(sol) -> NomaLocalPoint:
        traj = Trajectory(traj0.waypoints, sol.values(T))
        return NomaLocalPoint.from_raw(traj, sol.values(tau), sol.values(p), local.order, scn)

    return prog, extract


def _pairs(k_dev: int):
    return [(k, m) for k in range(k_dev) for m in range(k + 1, k_dev)]


def build_order_subproblem(local: NomaLocalPoint, scn: Scenario, alpha0: np.ndarray, lam: float):
    """Penalized LP over relaxed indicators; ``alpha0`` is the expansion point (N, K, K).

    Only ``alpha[n, k, m]`` with ``k < m`` are variables; the pairing rule
    fixes ``alpha[n, m, k] = 1 - alpha[n, k, m]``.  Returns ``(program, alpha)``
    with ``alpha`` an (N, K, K) object array of expressions.
    """
    k_dev, n_seg = local.power.shape
    active = local.active
    snr = np.where(active, scn.gamma0 * local.power / local.dist, 0.0)
    prog = ConicProgram("noma-order")
    eta = prog.add_var("eta")
    alpha = np.empty((n_seg, k_dev, k_dev), dtype=object)
    penalty = []
    for n in range(n_seg):
        for k in range(k_dev):
            alpha[n, k, k] = 0.0
        for k, m in _pairs(k_dev):
            a = prog.add_var(f"alpha[{n},{k},{m}]", lb=0.0, ub=1.0, start=alpha0[n, k, m])
            alpha[n, k, m] = a
            alpha[n, m, k] = 1.0 - a
            for expr, x0 in ((alpha[n, k, m], alpha0[n, k, m]), (alpha[n, m, k], alpha0[n, m, k])):
                penalty.append(taylor.square_lb(expr, x0) - expr)
    i0 = 1.0 + np.einsum("nmk,mn->kn", alpha0, snr)
    for k in range(k_dev):
        rate = []
        for n in range(n_seg):
            if not active[k, n]:
                continue
            interf = prog.add_var(f"I[{k},{n}]", lb=1.0, start=i0[k, n])
            prog.add_ge(interf, 1.0 + affine_sum(snr[m, n] * alpha[n, m, k] for m in range(k_dev) if m != k))
            s = local.signal[k, n]
            tangent = taylor.inv_product_rate(s, i0[k, n]) - LOG2E * (interf - i0[k, n]) / (i0[k, n] + s * i0[k, n] ** 2)
            rate.append(local.comm_time[n] * tangent)
        prog.add_ge(affine_sum(rate), eta)
    prog.maximize(eta + lam * affine_sum(penalty))
    return prog, alpha


@dataclass
class OrderResult:
    order: DecodingOrder
    relaxed: np.ndarray  # last relaxed indicators before rounding
    objective_trace: list = field(default_factory=list)
    lam: float = 0.0
    inner_iterations: int = 0
    binary_error: float = 0.0
    chosen: str = "repaired"


def repair_order(alpha: np.ndarray) -> DecodingOrder:
    """Round, then rebuild each segment's order from its Copeland score (ties by index)."""
    rounded = np.rint(np.clip(alpha, 0.0, 1.0))
    return DecodingOrder.from_sequences(DecodingOrder(rounded).sequences())


def solve_order(local: NomaLocalPoint, scn: Scenario, cfg: PenaltyConfig | None = None, ctx=None,
                tol: float | None = None) -> OrderResult:
    """Penalty iterations on the decoding order with everything else frozen."""
    cfg = cfg or PenaltyConfig()
    ctx = ctx or ao.StepContext()
    tol = scn.sca_tol if tol is None else tol
    k_dev, n_seg = local.power.shape
    if k_dev == 1:
        return OrderResult(local.order, local.order.alpha.copy(), [], 0.0, 0, 0.0, "trivial")
    off = ~np.eye(k_dev, dtype=bool)
    if cfg.start == "center":
        alpha0 = np.where(off[None], 0.5, 0.0) * np.ones((n_seg, 1, 1))
    else:
        alpha0 = local.order.alpha.astype(float).copy()
    lam = cfg.resolve_lambda(scn)
    trace: list[float] = []
    inner = 0
    worst = 1.0
    for escalation in range(cfg.max_escalations + 1):
        prev = None
        for _ in range(cfg.max_inner_iters):
            prog, alpha = build_order_subproblem(local, scn, alpha0, lam)
            sol = ctx.solve(prog, prog.name)
            inner += 1
            alpha0 = np.clip(sol.values(alpha), 0.0, 1.0)
            trace.append(sol.objective)
            if prev is not None and abs(sol.objective - prev) / max(abs(prev), 1e-9) < tol:
                break
            prev = sol.objective
        vals = alpha0[:, off]
        worst = float(np.max(np.abs(vals**2 - vals))) if vals.size else 0.0
        if worst <= cfg.binary_tol:
            break
        if escalation < cfg.max_escalations:
            lam *= cfg.lambda_growth
    else:
        raise PenaltyNotExact(worst, lam)

    candidates = [("repaired", repair_order(alpha0)), ("incumbent", local.order),
                  ("distance", init_order(local.trajectory, scn))]
    best_name, best, best_eta = None, None, -np.inf
    for name, order in candidates:
        value = float(noma_throughput(local.trajectory, NomaAllocation(local.comm_time, local.power, order), scn).min())
        if value > best_eta + 1e-12:
            best_name, best, best_eta = name, order, value
    return OrderResult(best, alpha0, trace, lam, inner, worst, best_name)


def embed_oma(traj: Trajectory, alloc: OmaAllocation, scn: Scenario, tol: float = 2 * TAU_MIN) -> NomaAllocation:
    """Re-express an OMA plan in NOMA form: the one awake device keeps its window and power.

    Segments with more than one awake device (time share above ``tol`` and
    nonzero power) cannot be mapped without changing throughput and raise
    ``ValueError``.
    """
    tau_k = np.asarray(alloc.time_share, dtype=float)
    p_k = np.asarray(alloc.power, dtype=float)
    awake = (tau_k > tol) & (p_k > 0)
    if np.any(awake.sum(axis=0) > 1):
        bad = np.flatnonzero(awake.sum(axis=0) > 1)
        raise ValueError(f"segments {bad.tolist()} have more than one awake device")
    comm = np.where(awake.any(axis=0), np.sum(np.where(awake, tau_k, 0.0), axis=0), 0.0)
    power = np.where(awake, p_k, 0.0)
    return NomaAllocation(comm, power, init_order(traj, scn))


def solve(
    scn: Scenario,
    straight: bool = False,
    penalty: PenaltyConfig | None = None,
    max_iter: int = ao.DEFAULT_MAX_ITER,
    tol: float | None = None,
    backend=None,
    dump_dir: str | None = None,
    init: NomaLocalPoint | None = None,
) -> SolveReport:
    """Trajectory, power and decoding-order updates in turn until the fractional gain drops below ``tol``."""
    local = init_solution(scn) if init is None else init
    penalty = penalty or PenaltyConfig()

    def order_step(pt: NomaLocalPoint, ctx: ao.StepContext):
        try:
            res = solve_order(pt, scn, penalty, ctx, tol)
        except PenaltyNotExact as exc:
            ctx.notes.append(f"order step kept incumbent: {exc}")
            return pt, None
        return pt.with_order(res.order, scn), None

    steps = [
        ("trajectory", ao.conic_step(lambda pt: build_trajectory_subproblem(pt, scn, straight))),
        ("power", ao.conic_step(lambda pt: build_power_subproblem(pt, scn))),
        ("order", order_step),
    ]
    scheme = "straight-noma" if straight else "noma"
    return ao.run(scheme, scn, local, steps, tol=tol, max_iter=max_iter, backend=backend, dump_dir=dump_dir)
