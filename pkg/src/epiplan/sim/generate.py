"""Random scenario and fault-schedule generation."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import DEFAULT_DT, FAULT_KINDS, Bounds, FaultEvent, RobotSpec, Scenario, Task


def generate_scenario(seed: int, n_tasks: int = 10, n_robots: int = 3, size: float = 30.0,
                      speed: float = 5.0, r_c: float = 5.0, dt: float = DEFAULT_DT,
                      depot: tuple[float, float] | None = None) -> Scenario:
    """Uniform random tasks in a square; all robots share one home depot (centre by default)."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, size, size=(n_tasks, 2))
    home = (size / 2, size / 2) if depot is None else tuple(depot)
    tasks = tuple(Task(k + 1, (float(x), float(y))) for k, (x, y) in enumerate(pts))
    robots = tuple(RobotSpec(i + 1, home, home, speed) for i in range(n_robots))
    return Scenario(Bounds(0.0, 0.0, size, size), tasks, robots, r_c=r_c, dt=dt, seed=seed).validate()


def generate_faults(m: int, makespan: float, seed: int, count: int = 1, kinds: Sequence[str] | None = None,
                    dt: float = DEFAULT_DT, window: tuple[float, float] = (0.1, 0.7),
                    min_separation: float = 0.1) -> tuple[FaultEvent, ...]:
    """Faults on distinct robots at times uniform in ``window`` of the makespan.

    Times snap to the tick grid; with several faults, consecutive times are at
    least ``min_separation`` of the makespan apart.
    """
    if count > m:
        raise ValueError("at most one fault per robot")
    rng = np.random.default_rng(seed)
    lo, hi = window[0] * makespan, window[1] * makespan
    for _ in range(1000):
        times = np.sort(rng.uniform(lo, hi, size=count))
        if count < 2 or np.all(np.diff(times) >= min_separation * makespan):
            break
    else:
        raise ValueError("could not place faults with the requested separation")
    robots = rng.choice(m, size=count, replace=False) + 1
    pool = list(kinds or FAULT_KINDS)
    picked = [pool[int(rng.integers(len(pool)))] for _ in range(count)]
    return tuple(
        FaultEvent(int(r), round(float(np.ceil(t / dt - 1e-9) * dt), 9), k)
        for t, r, k in zip(times, robots, picked)
    )
