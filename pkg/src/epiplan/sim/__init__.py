"""Mission simulation under faults, for the epistemic policy and the baseline."""

from .engine import BASELINE, EPISTEMIC, POLICIES, SimParams, Simulation, WorldState, run
from .generate import generate_faults, generate_scenario
from .metrics import CSV_COLUMNS, Metrics, compute_metrics, write_csv
from .trace import SimTrace

__all__ = [
    "BASELINE", "CSV_COLUMNS", "EPISTEMIC", "Metrics", "POLICIES", "SimParams", "SimTrace", "Simulation",
    "WorldState", "compute_metrics", "generate_faults", "generate_scenario", "run", "write_csv",
]
