"""Single runs, budget sweeps and scheme comparisons, written out as flat files."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import bounds, noma, oma
from .model import NomaAllocation, Scenario, audit
from .report import InfeasibleBudget, SolveReport, SubproblemFailure

log = logging.getLogger(__name__)

SCHEMES = ("oma1", "oma2", "noma", "straight-oma1", "straight-oma2", "straight-noma", "upper-bound")
SWEEP_PARAMS = ("uav_energy", "device_energy")

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def fmt(x) -> str:
    return f"{float(x):.9g}"


@dataclass(frozen=True)
class RunConfig:
    scheme: str = "oma2"
    out_dir: str = "."
    tol: float | None = None
    lam: float | None = None
    max_iter: int = 100
    dump_dir: str | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.tol is not None and not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")


def solve_scheme(scn: Scenario, cfg: RunConfig) -> SolveReport:
    straight = cfg.scheme.startswith("straight-")
    base = cfg.scheme.removeprefix("straight-")
    kw = dict(max_iter=cfg.max_iter, tol=cfg.tol, dump_dir=cfg.dump_dir)
    if base in oma.VARIANTS:
        return oma.solve(scn, variant=base, straight=straight, **kw)
    if base == "noma":
        return noma.solve(scn, straight=straight, penalty=noma.PenaltyConfig(lam=cfg.lam), **kw)
    raise ValueError(f"{cfg.scheme!r} is not an iterative scheme")


# ---------------------------------------------------------------- file output

def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def trajectory_rows(report: SolveReport):
    traj = report.trajectory
    v = traj.speeds
    for n, (x, y) in enumerate(traj.waypoints):
        if n < traj.n_segments:
            yield [n, fmt(x), fmt(y), fmt(traj.durations[n]), fmt(v[n])]
        else:
            yield [n, fmt(x), fmt(y), "", ""]


def allocation_rows(report: SolveReport):
    alloc = report.allocation
    k_dev, n_seg = alloc.power.shape
    if isinstance(alloc, NomaAllocation):
        tau = np.broadcast_to(alloc.comm_time, (k_dev, n_seg))
    else:
        tau = alloc.time_share
    for n in range(n_seg):
        for k in range(k_dev):
            yield [n, k, fmt(tau[k, n]), fmt(alloc.power[k, n])]


def order_rows(report: SolveReport):
    order = report.allocation.order
    if order.alpha.shape[1] < 2:
        return
    for n, seq in enumerate(order.sequences()):
        for rank, k in enumerate(seq):
            yield [n, rank, k]


def summary_dict(scn: Scenario, report: SolveReport | None, scheme: str, status: str, message: str = "") -> dict:
    out = {"scheme": scheme, "status": status, "hover_bound": bounds.hover_upper_bound(scn)}
    if message:
        out["message"] = message
    if report is not None:
        # re-audit what is about to be written, independently of the solver's own check
        verdict = audit(report.trajectory, report.allocation, scn)
        out.update(
            eta=report.eta,
            eta_solver=report.eta_solver,
            per_device=[float(q) for q in report.per_device],
            iterations=report.iterations,
            converged=report.converged,
            wall_time=report.wall_time,
            subproblem_time=report.subproblem_time,
            flight_time=float(report.trajectory.flight_time),
            audit_ok=verdict.ok,
            audit=verdict.summary(),
            notes=list(report.notes),
        )
    return out


def write_report(out_dir: str, scn: Scenario, report: SolveReport, scheme: str, status: str, message: str = "") -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_atomic(os.path.join(out_dir, "trajectory.csv"), csv_text(["n", "x", "y", "T", "V"], trajectory_rows(report)))
    write_atomic(os.path.join(out_dir, "allocation.csv"), csv_text(["n", "k", "tau", "p"], allocation_rows(report)))
    write_atomic(
        os.path.join(out_dir, "convergence.csv"),
        csv_text(["iter", "eta"], ([i, fmt(e)] for i, e in enumerate(report.trace))),
    )
    if isinstance(report.allocation, NomaAllocation):
        write_atomic(os.path.join(out_dir, "order.csv"), csv_text(["n", "rank", "device"], order_rows(report)))
    write_summary(out_dir, summary_dict(scn, report, scheme, status, message))


def write_summary(out_dir: str, summary: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_atomic(os.path.join(out_dir, "summary.json"), json.dumps(summary, indent=2) + "\n")


# ---------------------------------------------------------------- verbs

def run(scn: Scenario, cfg: RunConfig) -> int:
    """Solve one scheme and write its files to ``cfg.out_dir``; returns an exit code."""
    if cfg.dump_dir:
        os.makedirs(cfg.dump_dir, exist_ok=True)
    if cfg.scheme == "upper-bound":
        summary = {
            "scheme": cfg.scheme,
            "status": "ok",
            "eta": bounds.hover_upper_bound(scn),
            "hover_bound": bounds.hover_upper_bound(scn),
        }
        write_summary(cfg.out_dir, summary)
        return EXIT_OK
    try:
        report = solve_scheme(scn, cfg)
    except InfeasibleBudget as exc:
        write_summary(cfg.out_dir, summary_dict(scn, None, cfg.scheme, "infeasible", str(exc)))
        return EXIT_INFEASIBLE
    except SubproblemFailure as exc:
        if exc.report is not None:
            write_report(cfg.out_dir, scn, exc.report, cfg.scheme, "solver-failure", str(exc))
        else:
            write_summary(cfg.out_dir, summary_dict(scn, None, cfg.scheme, "solver-failure", str(exc)))
        return EXIT_SOLVER
    write_report(cfg.out_dir, scn, report, cfg.scheme, "ok")
    return EXIT_OK


def _point(args):
    scn, param, value, cfg = args
    scheme = cfg.scheme
    try:
        s = scn.replace(**{param: value})
        if scheme == "upper-bound":
            return [scheme, fmt(value), fmt(bounds.hover_upper_bound(s)), 0, "ok"]
        rep = solve_scheme(s, cfg)
        status = "ok" if rep.audit.ok else "audit-failed"
        return [scheme, fmt(value), fmt(rep.eta), rep.iterations, status]
    except InfeasibleBudget:
        return [scheme, fmt(value), "", "", "infeasible"]
    except SubproblemFailure as exc:
        return [scheme, fmt(value), "", exc.iteration, "solver-failure"]


def sweep(scn: Scenario, cfg: RunConfig, param: str, values, schemes=None, workers: int = 1) -> list:
    """One row per (scheme, value): scheme, value, eta, iterations, status.

    Rows come back in (scheme, value) order whatever the worker count, and
    are written to ``sweep.csv`` in ``cfg.out_dir``.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {SWEEP_PARAMS}")
    values = [float(v) for v in values]
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be sorted ascending")
    schemes = list(schemes or [cfg.scheme])
    jobs = [(scn, param, v, replace(cfg, scheme=s)) for s in schemes for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_point, jobs))
    else:
        rows = [_point(j) for j in jobs]
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_atomic(os.path.join(cfg.out_dir, "sweep.csv"), csv_text(["scheme", "value", "eta", "iterations", "status"], rows))
    return rows


def compare(scn: Scenario, cfg: RunConfig, schemes=None) -> int:
    """Run each scheme into its own sub-directory and tabulate them in ``compare.csv``."""
    schemes = list(schemes or SCHEMES)
    rows = []
    worst = EXIT_OK
    for s in schemes:
        sub = replace(cfg, scheme=s, out_dir=os.path.join(cfg.out_dir, s))
        started = time.perf_counter()
        code = run(scn, sub)
        worst = max(worst, code)
        with open(os.path.join(sub.out_dir, "summary.json")) as fh:
            summ = json.load(fh)
        rows.append([s, fmt(summ["eta"]) if "eta" in summ else "", summ.get("iterations", ""), summ["status"]])
        log.info("%s done in %.1f s", s, time.perf_counter() - started)
    write_atomic(os.path.join(cfg.out_dir, "compare.csv"), csv_text(["scheme", "eta", "iterations", "status"], rows))
    return worst
