"""Seeded policy comparisons: epistemic (bilevel plan) against baseline (minmax plan)."""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from scipy.stats import binomtest

from ..planner import BILEVEL, MINMAX, GaParams, solve
from .engine import BASELINE, EPISTEMIC, SimParams, run
from .generate import generate_faults, generate_scenario

COMPARE_COLUMNS = (
    "seed", "fault_robot", "fault_kind", "fault_time", "minmax_makespan", "bilevel_makespan",
    "epistemic_time", "baseline_time", "epistemic_complete", "baseline_complete",
    "epistemic_replans", "baseline_replans", "winner",
)


@dataclass(frozen=True)
class ExperimentSpec:
    seeds: tuple[int, ...] = tuple(range(20))
    n_tasks: int = 10
    n_robots: int = 3
    size: float = 30.0
    speed: float = 5.0
    r_c: float = 5.0
    faults: int = 1
    fault_kinds: tuple[str, ...] | None = None
    # cycle through fault_kinds by seed instead of sampling
    cycle_kinds: bool = False
    delta: float = 0.3
    sigma: float = 0.5
    ga: GaParams = field(default_factory=GaParams)
    sim: SimParams = field(default_factory=SimParams)
    workers: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")


def run_seed(spec: ExperimentSpec, seed: int) -> dict:
    sc = generate_scenario(seed, spec.n_tasks, spec.n_robots, spec.size, spec.speed, spec.r_c)
    ga = replace(spec.ga, seed=seed, sigma=spec.sigma, delta=spec.delta, workers=1)
    minmax = solve(sc, replace(ga, mode=MINMAX))
    bilevel = solve(sc, replace(ga, mode=BILEVEL))
    kinds = spec.fault_kinds
    if spec.cycle_kinds and kinds:
        kinds = (kinds[seed % len(kinds)],)
    # one fault schedule, drawn against the minmax makespan, is shared by both policies
    faults = generate_faults(sc.m, minmax.makespan, seed, spec.faults, kinds, sc.dt) if spec.faults else ()
    sc = sc.with_faults(faults)
    _, me = run(sc, bilevel, EPISTEMIC, seed, spec.sim)
    _, mb = run(sc, minmax, BASELINE, seed, spec.sim)
    if me.completion_time < mb.completion_time - 1e-9:
        winner = EPISTEMIC
    elif mb.completion_time < me.completion_time - 1e-9:
        winner = BASELINE
    else:
        winner = "tie"
    return {
        "seed": seed,
        "fault_robot": ";".join(str(f.robot_id) for f in faults),
        "fault_kind": ";".join(f.kind for f in faults),
        "fault_time": ";".join(f"{f.time:g}" for f in faults),
        "minmax_makespan": round(minmax.makespan, 6),
        "bilevel_makespan": round(bilevel.makespan, 6),
        "epistemic_time": me.completion_time,
        "baseline_time": mb.completion_time,
        "epistemic_complete": me.complete,
        "baseline_complete": mb.complete,
        "epistemic_replans": me.replan_count,
        "baseline_replans": mb.replan_count,
        "winner": winner,
    }


def _run_seed_args(args):
    return run_seed(*args)


def compare(spec: ExperimentSpec) -> tuple[list[dict], dict]:
    """Per-seed rows (in seed order) and a summary with medians, win rate and sign test."""
    jobs = [(spec, s) for s in spec.seeds]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(_run_seed_args, jobs))
    else:
        rows = [run_seed(*j) for j in jobs]
    return rows, summarize(rows)


def sign_test(wins: int, losses: int) -> float:
    """One-sided p-value that the first policy wins more often; ties are dropped."""
    n = wins + losses
    if n == 0:
        return 1.0
    return float(binomtest(wins, n, 0.5, alternative="greater").pvalue)


def summarize(rows: Sequence[dict]) -> dict:
    e = [r["epistemic_time"] for r in rows]
    b = [r["baseline_time"] for r in rows]
    wins = sum(r["winner"] == EPISTEMIC for r in rows)
    losses = sum(r["winner"] == BASELINE for r in rows)
    return {
        "runs": len(rows),
        "epistemic_median": statistics.median(e) if e else None,
        "baseline_median": statistics.median(b) if b else None,
        "epistemic_wins": wins,
        "baseline_wins": losses,
        "ties": len(rows) - wins - losses,
        "win_rate": wins / len(rows) if rows else 0.0,
        "sign_test_p": sign_test(wins, losses),
        "epistemic_incomplete": sum(not r["epistemic_complete"] for r in rows),
        "baseline_incomplete": sum(not r["baseline_complete"] for r in rows),
    }
