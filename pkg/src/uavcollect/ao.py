"""Outer alternating-optimization loop shared by the OMA and NOMA solvers."""
from __future__ import annotations

import logging
import os
import time
from typing import Callable, Sequence

from . import conic
from .model import Scenario, audit, throughput
from .report import SolveReport, SubproblemFailure

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-6
DEFAULT_MAX_ITER = 100
# the last subproblem's bound must certify the recomputed objective this closely before stopping
CERTIFY_GAP = 5e-4


class StepFailed(RuntimeError):
    def __init__(self, status: str):
        super().__init__(status)
        self.status = status


class StepContext:
    """Solves the programs of one block update; handles dumps, timing and status checks."""

    def __init__(self, backend=None, dump_dir: str | None = None, prefix: str = ""):
        self.backend = backend
        self.dump_dir = dump_dir
        self.prefix = prefix
        self.solve_time = 0.0
        self.notes: list[str] = []
        self._count = 0

    def solve(self, prog: conic.ConicProgram, label: str):
        self._count += 1
        if self.dump_dir:
            path = os.path.join(self.dump_dir, f"{self.prefix}{self._count:04d}_{label}.conic")
            with open(path, "w") as fh:
                fh.write(conic.dumps(prog))
        sol = conic.solve(prog, backend=self.backend)
        self.solve_time += sol.solve_time
        if not sol.ok:
            raise StepFailed(sol.status)
        if sol.reduced_accuracy:
            self.notes.append(f"{label}: reduced accuracy")
        return sol


# A step maps (local point, context) to (candidate local point, subproblem objective).
Step = Callable[[object, StepContext], tuple]


def conic_step(builder: Callable) -> Step:
    """Wrap a ``builder(local) -> (program, extract)`` as a step."""

    def step(local, ctx: StepContext):
        prog, extract = builder(local)
        sol = ctx.solve(prog, prog.name)
        return extract(sol), sol.objective

    return step


def make_report(scheme, scn, local, trace, eta_solver, iterations, started, converged, sub_time, notes) -> SolveReport:
    traj, alloc = local.trajectory, local.allocation
    q = throughput(traj, alloc, scn)
    return SolveReport(
        scheme=scheme,
        eta=float(q.min()),
        eta_solver=float(eta_solver),
        trace=tuple(float(t) for t in trace),
        iterations=iterations,
        wall_time=time.perf_counter() - started,
        trajectory=traj,
        allocation=alloc,
        audit=audit(traj, alloc, scn),
        converged=converged,
        per_device=q,
        subproblem_time=sub_time,
        notes=tuple(notes),
    )


def run(
    scheme: str,
    scn: Scenario,
    local,
    steps: Sequence[tuple[str, Step]],
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    backend=None,
    dump_dir: str | None = None,
) -> SolveReport:
    """Cycle through ``steps`` until the fractional gain of one full round drops below ``tol``.

    Stopping also needs the last convex bound within ``CERTIFY_GAP`` of the
    recomputed objective, so the reported plan is certified by its own
    subproblem; a round in which every candidate is rejected stops the loop.
    Candidates that fail the audit or lower the objective (numerical noise
    only; every step is a restriction containing the current point) are
    discarded and the current point is kept.
    """
    tol = scn.sca_tol if tol is None else tol
    started = time.perf_counter()
    trace = [local.eta]
    eta_solver = local.eta
    ctx = StepContext(backend, dump_dir, prefix=f"{scheme}_")
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        moved = False
        for name, step in steps:
            try:
                cand, objective = step(local, ctx)
            except StepFailed as exc:
                partial = make_report(
                    scheme, scn, local, trace, eta_solver, it - 1, started, False, ctx.solve_time, ctx.notes
                )
                raise SubproblemFailure(name, exc.status, it, partial) from None
            ok = audit(cand.trajectory, cand.allocation, scn).ok
            if ok and cand.eta >= local.eta - MONOTONE_SLACK:
                local = cand
                moved = True
                if objective is not None:
                    eta_solver = objective
            else:
                ctx.notes.append(f"iter {it} {name}: step rejected ({'audit' if not ok else 'decrease'})")
        trace.append(local.eta)
        log.debug("%s iter %d eta=%.6g", scheme, it, local.eta)
        gain = abs(trace[-1] - trace[-2]) / max(trace[-2], 1e-9)
        certified = abs(local.eta - eta_solver) <= CERTIFY_GAP * max(local.eta, 1e-9)
        if (gain < tol and certified) or not moved:
            converged = True
            break
    return make_report(scheme, scn, local, trace, eta_solver, it, started, converged, ctx.solve_time, ctx.notes)
