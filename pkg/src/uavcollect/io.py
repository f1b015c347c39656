"""Scenario files and seeded random scenarios.

A scenario file is a YAML mapping.  Only ``devices``, ``uav_energy`` and
``device_energy`` are required; everything else falls back to the defaults
of :class:`~uavcollect.model.Scenario`::

    devices: [[120, 340], [410, 80], [250, 250]]
    device_energy: 10          # J, scalar or one value per device
    uav_energy: 20000          # J
    altitude: 100
    u_start: [0, 0]
    u_end: [500, 500]
    v_max: 30
    delta: 20
    n_segments: 36             # optional, default: ceil(path / delta)
    gamma0: {value: 50, unit: dB}   # or a plain linear number
    p_max: 0.1
    sca_tol: 0.01
    propulsion:                # any subset
      p0_blade: 79.86
      p_induced: 88.63
"""
from __future__ import annotations

import math
from dataclasses import fields

import numpy as np
import yaml

from .model import PropulsionParams, Scenario, ScenarioError

AREA_SIDE = 500.0
DEFAULT_DEVICE_ENERGY = 10.0
DEFAULT_UAV_ENERGY = 20e3

_SCALARS = ("uav_energy", "altitude", "v_max", "delta", "p_max", "sca_tol", "bandwidth")
_VECTORS = ("u_start", "u_end")
_KNOWN = set(_SCALARS) | set(_VECTORS) | {"devices", "device_energy", "n_segments", "gamma0", "propulsion"}


class ScenarioParseError(ValueError):
    """The scenario file is not valid YAML or does not follow the schema."""

    def __init__(self, message: str, field_name: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_name is not None:
            where.append(f"field '{field_name}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.field = field_name
        self.line = line


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _gamma0(raw) -> float:
    if isinstance(raw, dict):
        if "value" not in raw:
            raise ScenarioParseError("expected a 'value' key", "gamma0")
        unit = str(raw.get("unit", "linear")).strip().lower()
        value = _number(raw["value"], "gamma0.value")
        if unit == "db":
            return db_to_linear(value)
        if unit == "linear":
            return value
        raise ScenarioParseError(f"unit must be 'dB' or 'linear', got {raw.get('unit')!r}", "gamma0")
    return _number(raw, "gamma0")


def _number(raw, name: str) -> float:
    if isinstance(raw, bool):
        raise ScenarioParseError("expected a number", name)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ScenarioParseError(f"expected a number, got {raw!r}", name) from None
    if not math.isfinite(value):
        raise ScenarioParseError("must be finite", name)
    return value


def _points(raw, name: str) -> np.ndarray:
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioParseError("expected numeric [x, y] pairs", name) from None
    if arr.ndim == 1 and arr.size == 2 and name != "devices":
        return arr
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ScenarioParseError("expected a non-empty list of [x, y] pairs", name)
    return arr


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioParseError("top level must be a mapping")
    unknown = sorted(set(data) - _KNOWN)
    if unknown:
        raise ScenarioParseError(f"unknown keys {unknown}", unknown[0])
    for required in ("devices", "uav_energy", "device_energy"):
        if required not in data:
            raise ScenarioParseError("missing required field", required)

    kwargs = {"devices": _points(data["devices"], "devices")}
    energy = data["device_energy"]
    if isinstance(energy, (list, tuple)):
        kwargs["device_energy"] = np.array([_number(e, "device_energy") for e in energy])
    else:
        kwargs["device_energy"] = _number(energy, "device_energy")
    for name in _SCALARS:
        if name in data:
            kwargs[name] = _number(data[name], name)
    for name in _VECTORS:
        if name in data:
            pt = _points(data[name], name)
            if pt.shape != (2,):
                raise ScenarioParseError("expected one [x, y] pair", name)
            kwargs[name] = pt
    if data.get("n_segments") is not None:
        n = data["n_segments"]
        if isinstance(n, bool) or not isinstance(n, int):
            raise ScenarioParseError("expected an integer", "n_segments")
        kwargs["n_segments"] = n
    if "gamma0" in data:
        kwargs["gamma0"] = _gamma0(data["gamma0"])

    prop = data.get("propulsion") or {}
    if not isinstance(prop, dict):
        raise ScenarioParseError("expected a mapping", "propulsion")
    allowed = {f.name for f in fields(PropulsionParams)}
    bad = sorted(set(prop) - allowed)
    if bad:
        raise ScenarioParseError(f"unknown keys {bad}", f"propulsion.{bad[0]}")
    try:
        kwargs["propulsion"] = PropulsionParams(**{k: _number(v, f"propulsion.{k}") for k, v in prop.items()})
        return Scenario(**kwargs)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioParseError(str(exc), "propulsion") from None


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioParseError(str(getattr(exc, "problem", exc)), line=mark.line + 1 if mark else None) from None
    return scenario_from_dict(data)


def scenario_to_dict(scn: Scenario) -> dict:
    """Plain-Python form that :func:`scenario_from_dict` reads back unchanged."""
    out = {
        "devices": scn.devices.tolist(),
        "device_energy": scn.device_energy.tolist(),
        "uav_energy": float(scn.uav_energy),
        "n_segments": int(scn.n_segments),
        "gamma0": float(scn.gamma0),
        "u_start": scn.u_start.tolist(),
        "u_end": scn.u_end.tolist(),
        "propulsion": {f.name: float(getattr(scn.propulsion, f.name)) for f in fields(PropulsionParams)},
    }
    for name in _SCALARS:
        out[name] = float(getattr(scn, name))
    return out


def dump_scenario(scn: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scn), sort_keys=False)


def generate_scenario(seed: int, k_devices: int = 3, **overrides) -> Scenario:
    """Devices i.i.d. uniform on the 500 m square, everything else at its default."""
    if k_devices < 1:
        raise ValueError("k_devices must be >= 1")
    rng = np.random.default_rng(seed)
    devices = rng.uniform(0.0, AREA_SIDE, size=(k_devices, 2))
    kwargs = dict(device_energy=DEFAULT_DEVICE_ENERGY, uav_energy=DEFAULT_UAV_ENERGY)
    kwargs.update(overrides)
    return Scenario(devices=devices, **kwargs)
