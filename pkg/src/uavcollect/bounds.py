"""Analytic reference points: hover upper bound, max-range speed, straight-line baselines."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

from .model import PropulsionParams, Scenario, propulsion_power


def hover_upper_bound(scn: Scenario) -> float:
    """Max-min throughput (bits/Hz) with unlimited UAV energy.

    Hovering above each device for unbounded time, ``t log2(1 + E g / t)``
    increases towards ``E g / ln 2`` with ``g`` the hover SNR per watt.
    """
    return float(np.min(scn.device_energy) * scn.gamma_hover / math.log(2.0))


def hover_throughput(t, energy: float, gamma_h: float):
    """Throughput of one device after hovering ``t`` seconds and spending ``energy`` evenly."""
    t = np.asarray(t, dtype=float)
    return t * np.log2(1 + energy * gamma_h / t)


def max_range_speed(params: PropulsionParams, v_max: float) -> float:
    """Speed maximizing distance flown per joule, v / P(v), on (0, v_max]."""
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    res = minimize_scalar(
        lambda v: -v / propulsion_power(v, params),
        bounds=(0.0, v_max),
        method="bounded",
        options={"xatol": 1e-6},
    )
    v = float(res.x)
    # the bounded search stops just short of an endpoint maximum
    if v_max / propulsion_power(v_max, params) >= v / propulsion_power(v, params):
        v = v_max
    return v


def straight_line_solution(scn: Scenario, scheme: str, **kwargs):
    """Run ``scheme`` ('oma1', 'oma2' or 'noma') with every waypoint pinned to the u_start-u_end line."""
    if scheme in ("oma1", "oma2"):
        from . import oma

        return oma.solve(scn, variant=scheme, straight=True, **kwargs)
    if scheme == "noma":
        from . import noma

        return noma.solve(scn, straight=True, **kwargs)
    raise ValueError(f"unknown scheme {scheme!r}")
