"""Solver results and failures shared by every scheme."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import AuditReport, Trajectory


class InfeasibleBudget(ValueError):
    """The UAV cannot even fly the straight initial path on its energy budget."""

    def __init__(self, required: float, available: float):
        super().__init__(
            f"straight flight at max-range speed needs {required:.2f} J but only "
            f"{available:.2f} J are on board (deficit {required - available:.2f} J)"
        )
        self.required = required
        self.available = available
        self.deficit = required - available


@dataclass(frozen=True, eq=False)
class SolveReport:
    scheme: str
    eta: float  # min-throughput recomputed from the returned plan
    eta_solver: float  # objective reported by the last convex subproblem
    trace: tuple  # recomputed min-throughput after each outer iteration (trace[0] = initial point)
    iterations: int
    wall_time: float
    trajectory: Trajectory
    allocation: object
    audit: AuditReport
    converged: bool
    per_device: np.ndarray = field(default=None)
    subproblem_time: float = 0.0
    notes: tuple = ()

    def is_monotone(self, slack: float = 1e-6) -> bool:
        t = np.asarray(self.trace)
        return bool(np.all(np.diff(t) >= -slack))


class SubproblemFailure(RuntimeError):
    """A convex subproblem did not reach an optimal status.

    ``report`` describes the last feasible iterate reached before the failure.
    """

    def __init__(self, subproblem: str, status: str, iteration: int, report: SolveReport | None):
        super().__init__(f"{subproblem} returned '{status}' at outer iteration {iteration}")
        self.subproblem = subproblem
        self.status = status
        self.iteration = iteration
        self.report = report
