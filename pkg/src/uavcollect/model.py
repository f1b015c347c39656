"""Physical and information-theoretic models for UAV data collection.

Positions are horizontal 2-D coordinates in metres; the UAV flies at a
fixed altitude.  A flight plan is path-discretized: ``N + 1`` waypoints
and ``N`` segment durations, with every rate evaluated at the segment's
start waypoint.  Throughputs are normalized to bits/Hz (bandwidth = 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LOG2E = 1.0 / math.log(2.0)


class ScenarioError(ValueError):
    """A scenario field violates its invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class PropulsionParams:
    """Rotary-wing propulsion model constants (SI units)."""

    p0_blade: float = 79.86
    p_induced: float = 88.63
    tip_speed: float = 120.0
    rotor_induced_v: float = 4.03
    fuselage_drag_ratio: float = 0.6
    air_density: float = 1.225
    rotor_solidity: float = 0.05
    rotor_disc_area: float = 0.503

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not (value > 0 and math.isfinite(value)):
                raise ScenarioError(f"propulsion.{name}", f"must be positive, got {value!r}")

    @property
    def parasite_coeff(self) -> float:
        """Coefficient of V**3 in the parasite power term."""
        return 0.5 * self.fuselage_drag_ratio * self.air_density * self.rotor_solidity * self.rotor_disc_area

    @property
    def hover_power(self) -> float:
        return self.p0_blade + self.p_induced


@dataclass(frozen=True, eq=False)
class Scenario:
    devices: np.ndarray
    device_energy: np.ndarray
    uav_energy: float
    altitude: float = 100.0
    u_start: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0]))
    u_end: np.ndarray = field(default_factory=lambda: np.array([500.0, 500.0]))
    v_max: float = 30.0
    delta: float = 20.0
    n_segments: int | None = None  # None: the fewest segments of length <= delta
    gamma0: float = 1e5
    p_max: float = 0.1
    propulsion: PropulsionParams = field(default_factory=PropulsionParams)
    sca_tol: float = 1e-2
    bandwidth: float = 1.0

    def __post_init__(self):
        devices = np.array(self.devices, dtype=float)
        if devices.ndim == 1 and devices.size == 2:
            devices = devices.reshape(1, 2)
        if devices.ndim != 2 or devices.shape[1] != 2:
            raise ScenarioError("devices", "expected a list of 2-D positions")
        if devices.shape[0] < 1:
            raise ScenarioError("devices", "need at least one device")
        energy = np.array(self.device_energy, dtype=float)
        if energy.ndim == 0:
            energy = np.full(devices.shape[0], float(energy))
        if energy.shape != (devices.shape[0],):
            raise ScenarioError("device_energy", "need one value per device")
        if np.any(energy < 0) or not np.all(np.isfinite(energy)):
            raise ScenarioError("device_energy", "must be finite and >= 0")
        u_start = np.array(self.u_start, dtype=float).reshape(2)
        u_end = np.array(self.u_end, dtype=float).reshape(2)
        object.__setattr__(self, "devices", devices)
        object.__setattr__(self, "device_energy", energy)
        object.__setattr__(self, "u_start", u_start)
        object.__setattr__(self, "u_end", u_end)
        for arr in (devices, energy, u_start, u_end):
            arr.setflags(write=False)

        if not self.uav_energy > 0:
            raise ScenarioError("uav_energy", "must be positive")
        if not self.altitude > 0:
            raise ScenarioError("altitude", "must be positive")
        if not self.v_max > 0:
            raise ScenarioError("v_max", "must be positive")
        if not self.delta > 0:
            raise ScenarioError("delta", "must be positive")
        if self.delta > self.altitude:
            raise ScenarioError("delta", f"segment cap {self.delta} exceeds altitude {self.altitude}")
        if self.n_segments is None:
            object.__setattr__(self, "n_segments", max(1, math.ceil(self.path_length / self.delta - 1e-9)))
        if int(self.n_segments) != self.n_segments or self.n_segments < 1:
            raise ScenarioError("n_segments", "must be a positive integer")
        object.__setattr__(self, "n_segments", int(self.n_segments))
        if self.n_segments * self.delta < self.path_length * (1 - 1e-12):
            raise ScenarioError(
                "n_segments",
                f"{self.n_segments} segments of {self.delta} m cannot span {self.path_length:.3f} m",
            )
        if not self.gamma0 > 0:
            raise ScenarioError("gamma0", "must be positive")
        if not self.p_max > 0:
            raise ScenarioError("p_max", "must be positive")
        if not 0 < self.sca_tol < 1:
            raise ScenarioError("sca_tol", "must lie in (0, 1)")
        if not self.bandwidth > 0:
            raise ScenarioError("bandwidth", "must be positive")

    @property
    def n_devices(self) -> int:
        return self.devices.shape[0]

    @property
    def path_length(self) -> float:
        return float(np.linalg.norm(self.u_end - self.u_start))

    @property
    def gamma_hover(self) -> float:
        return self.gamma0 / self.altitude**2

    def replace(self, **changes) -> "Scenario":
        kwargs = {name: getattr(self, name) for name in self.__dataclass_fields__}
        kwargs.update(changes)
        return Scenario(**kwargs)


@dataclass(frozen=True, eq=False)
class Trajectory:
    waypoints: np.ndarray  # (N + 1, 2)
    durations: np.ndarray  # (N,)

    def __post_init__(self):
        wp = np.array(self.waypoints, dtype=float)
        dur = np.array(self.durations, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 2 or dur.shape != (wp.shape[0] - 1,):
            raise ValueError("trajectory needs N + 1 waypoints and N durations")
        wp.setflags(write=False)
        dur.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "durations", dur)

    @property
    def n_segments(self) -> int:
        return self.durations.shape[0]

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    @property
    def speeds(self) -> np.ndarray:
        return self.segment_lengths / self.durations

    @property
    def flight_time(self) -> float:
        return float(self.durations.sum())


@dataclass(frozen=True, eq=False)
class OmaAllocation:
    time_share: np.ndarray  # (K, N) seconds
    power: np.ndarray  # (K, N) watts


@dataclass(frozen=True, eq=False)
class DecodingOrder:
    """Pairwise SIC indicators: ``alpha[n, k, m] = 1`` iff k is decoded after m."""

    alpha: np.ndarray  # (N, K, K), zero diagonal

    @classmethod
    def from_sequences(cls, sequences) -> "DecodingOrder":
        """Build from per-segment decode sequences (first decoded first)."""
        seqs = [list(s) for s in sequences]
        k = len(seqs[0]) if seqs else 0
        alpha = np.zeros((len(seqs), k, k))
        for n, seq in enumerate(seqs):
            pos = np.empty(k, dtype=int)
            pos[seq] = np.arange(k)
            alpha[n] = pos[:, None] > pos[None, :]
        return cls(alpha)

    def sequences(self) -> list[list[int]]:
        """Per-segment decode sequences, ordering devices by how many precede them."""
        out = []
        for a in self.alpha:
            score = np.rint(a).sum(axis=1)
            out.append([int(i) for i in np.lexsort((np.arange(len(score)), score))])
        return out

    def violations(self, tol: float = 1e-9) -> list[str]:
        msgs = []
        a = self.alpha
        k = a.shape[1] if a.ndim == 3 else 0
        if k == 0:
            return msgs
        off = ~np.eye(k, dtype=bool)
        vals = a[:, off]
        bin_err = np.max(np.minimum(np.abs(vals), np.abs(vals - 1))) if vals.size else 0.0
        if bin_err > tol:
            msgs.append(f"non-binary indicator (max distance {bin_err:.3g})")
        pair_err = np.max(np.abs(a + a.transpose(0, 2, 1) - 1)[:, off]) if vals.size else 0.0
        if pair_err > tol:
            msgs.append(f"pairing a[k,m] + a[m,k] != 1 (max error {pair_err:.3g})")
        for n, seq in enumerate(self.sequences()):
            rebuilt = DecodingOrder.from_sequences([seq]).alpha[0]
            if not np.array_equal(rebuilt[off], np.rint(a[n])[off]):
                msgs.append(f"segment {n}: decoding relation is cyclic")
        return msgs


@dataclass(frozen=True, eq=False)
class NomaAllocation:
    comm_time: np.ndarray  # (N,)
    power: np.ndarray  # (K, N)
    order: DecodingOrder


def channel_snr_gain(u, w, altitude: float, gamma0: float):
    """Received SNR per watt of transmit power; broadcasts over leading axes."""
    diff = np.asarray(u, dtype=float) - np.asarray(w, dtype=float)
    return gamma0 / (np.sum(diff * diff, axis=-1) + altitude**2)


def _induced_factor(v, v0):
    # sqrt(1 + v^4/(4 v0^4)) - v^2/(2 v0^2), rewritten to avoid cancellation
    b = v**2 / (2 * v0**2)
    return 1.0 / (np.sqrt(1.0 + b * b) + b)


def propulsion_power(v, params: PropulsionParams):
    v = np.asarray(v, dtype=float)
    blade = params.p0_blade * (1 + 3 * v**2 / params.tip_speed**2)
    induced = params.p_induced * np.sqrt(_induced_factor(v, params.rotor_induced_v))
    parasite = params.parasite_coeff * v**3
    out = blade + induced + parasite
    return float(out) if out.ndim == 0 else out


def induced_time(seg_len, duration, v0: float):
    """The induced-power time slack: (sqrt(T^4 + s^4/(4 v0^4)) - s^2/(2 v0^2))^(1/2)."""
    s2 = np.asarray(seg_len, dtype=float) ** 2
    t4 = np.asarray(duration, dtype=float) ** 4
    b = s2 / (2 * v0**2)
    return np.sqrt(t4 / (np.sqrt(t4 + b * b) + b))


def segment_energy(seg_len, duration, params: PropulsionParams):
    s = np.asarray(seg_len, dtype=float)
    t = np.asarray(duration, dtype=float)
    if np.any(t <= 0):
        raise ValueError("segment duration must be positive")
    out = (
        params.p0_blade * (t + 3 * s**2 / (params.tip_speed**2 * t))
        + params.p_induced * induced_time(s, t, params.rotor_induced_v)
        + params.parasite_coeff * s**3 / t**2
    )
    return float(out) if out.ndim == 0 else out


def trajectory_energy(traj: Trajectory, params: PropulsionParams) -> float:
    return float(np.sum(segment_energy(traj.segment_lengths, traj.durations, params)))


def path_loss_matrix(traj: Trajectory, scn: Scenario) -> np.ndarray:
    """d[k, n] = squared UAV-device distance at segment n's start waypoint."""
    diff = traj.waypoints[None, :-1, :] - scn.devices[:, None, :]
    return np.sum(diff * diff, axis=-1) + scn.altitude**2


def oma_rates(traj: Trajectory, power, scn: Scenario) -> np.ndarray:
    """Per-second spectral efficiency log2(1 + SNR) for every (device, segment)."""
    return np.log2(1 + scn.gamma0 * np.asarray(power) / path_loss_matrix(traj, scn))


def oma_throughput(traj: Trajectory, alloc: OmaAllocation, scn: Scenario) -> np.ndarray:
    return np.sum(alloc.time_share * oma_rates(traj, alloc.power, scn), axis=1)


def noma_sinr_matrix(traj: Trajectory, alloc: NomaAllocation, scn: Scenario) -> np.ndarray:
    """SINR[k, n] under the allocation's SIC order."""
    snr = scn.gamma0 * alloc.power / path_loss_matrix(traj, scn)  # (K, N)
    # interference on k at n: sum_m alpha[n, m, k] * snr[m, n]
    interference = np.einsum("nmk,mn->kn", alloc.order.alpha, snr)
    return snr / (1 + interference)


def noma_sinr(k: int, n: int, traj: Trajectory, alloc: NomaAllocation, scn: Scenario) -> float:
    return float(noma_sinr_matrix(traj, alloc, scn)[k, n])


def noma_throughput(traj: Trajectory, alloc: NomaAllocation, scn: Scenario) -> np.ndarray:
    return np.sum(alloc.comm_time[None, :] * np.log2(1 + noma_sinr_matrix(traj, alloc, scn)), axis=1)


def throughput(traj: Trajectory, alloc, scn: Scenario) -> np.ndarray:
    if isinstance(alloc, NomaAllocation):
        return noma_throughput(traj, alloc, scn)
    return oma_throughput(traj, alloc, scn)


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: tuple
    excess: float

    def __str__(self):
        return f"{self.constraint}{list(self.index)} exceeds by {self.excess:.3g}"


@dataclass(frozen=True)
class AuditReport:
    violations: tuple
    rel_tol: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "feasible"
        return "; ".join(str(v) for v in self.violations[:5]) + (
            f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        )


def audit(traj: Trajectory, alloc, scn: Scenario, rel_tol: float = 1e-6) -> AuditReport:
    """Check a candidate plan against every original (unrelaxed) constraint."""
    found: list[Violation] = []

    def check(name, index, lhs, rhs):
        excess = float(lhs - rhs)
        if excess > rel_tol * max(abs(float(rhs)), 1.0):
            found.append(Violation(name, index, excess))

    n_seg = traj.n_segments
    for name, point, target in (("start", traj.waypoints[0], scn.u_start), ("end", traj.waypoints[-1], scn.u_end)):
        check(name, (), np.linalg.norm(point - target), 0.0)
    lengths = traj.segment_lengths
    for n in range(n_seg):
        check("duration_positive", (n,), 0.0, traj.durations[n])
        check("segment_length", (n,), lengths[n], scn.delta)
        check("speed", (n,), lengths[n], scn.v_max * traj.durations[n])
    if np.all(traj.durations > 0):
        check("uav_energy", (), trajectory_energy(traj, scn.propulsion), scn.uav_energy)

    power = np.asarray(alloc.power)
    if power.shape != (scn.n_devices, n_seg):
        found.append(Violation("power_shape", power.shape, float("inf")))
        return AuditReport(tuple(found), rel_tol)
    for k, n in np.ndindex(power.shape):
        check("power_min", (k, n), 0.0, power[k, n])
        check("power_max", (k, n), power[k, n], scn.p_max)

    if isinstance(alloc, NomaAllocation):
        tau = np.asarray(alloc.comm_time)
        for n in range(n_seg):
            check("time_min", (n,), 0.0, tau[n])
            check("time_budget", (n,), tau[n], traj.durations[n])
        spent = power @ tau
        for msg in alloc.order.violations():
            found.append(Violation("decoding_order: " + msg, (), float("nan")))
    else:
        tau = np.asarray(alloc.time_share)
        for k, n in np.ndindex(tau.shape):
            check("time_min", (k, n), 0.0, tau[k, n])
        for n in range(n_seg):
            check("time_budget", (n,), tau[:, n].sum(), traj.durations[n])
        spent = np.sum(tau * power, axis=1)
    for k in range(scn.n_devices):
        check("device_energy", (k,), spent[k], scn.device_energy[k])
    return AuditReport(tuple(found), rel_tol)
