"""Max-min throughput UAV data collection with OMA and NOMA uplinks."""
from .bounds import hover_upper_bound, max_range_speed, straight_line_solution
from .io import generate_scenario, load_scenario
from .model import PropulsionParams, Scenario, Trajectory, audit, throughput
from .report import InfeasibleBudget, SolveReport, SubproblemFailure

__all__ = [
    "PropulsionParams",
    "Scenario",
    "Trajectory",
    "audit",
    "throughput",
    "hover_upper_bound",
    "max_range_speed",
    "straight_line_solution",
    "generate_scenario",
    "load_scenario",
    "InfeasibleBudget",
    "SolveReport",
    "SubproblemFailure",
]
