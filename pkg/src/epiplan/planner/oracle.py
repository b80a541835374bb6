"""Exhaustive minMax mTSP solver used as a test oracle."""

from __future__ import annotations

import itertools

from ..core import EpiplanError, Scenario
from .fitness import Evaluator


class InstanceTooLargeError(EpiplanError, ValueError):
    pass


def brute_force_mtsp(scenario: Scenario, limit: int = 8, max_robots: int = 4):
    """Provably minimal makespan over all ordered set partitions.

    The makespan is a max of independent per-robot route times, so each robot's
    best order is found per task subset and combined over all task-to-robot
    assignments. Ties go to the lexicographically smallest tuple of tours.
    Returns ``(tours, makespan)``.
    """
    n, m = scenario.n, scenario.m
    if n > limit or m > max_robots:
        raise InstanceTooLargeError(f"n={n}, m={m} exceeds brute-force limit (n<={limit}, m<={max_robots})")
    ev = Evaluator(scenario)
    # best[s][mask] -> (duration, tour)
    best = []
    for s in range(m):
        table = {}
        for mask in range(1 << n):
            subset = [t + 1 for t in range(n) if mask >> t & 1]
            top = None
            for perm in itertools.permutations(subset):
                d = ev.duration(s, perm)
                if top is None or d < top[0]:
                    top = (d, perm)
            table[mask] = top
        best.append(table)
    top = None
    for assign in itertools.product(range(m), repeat=n):
        masks = [0] * m
        for t, s in enumerate(assign):
            masks[s] |= 1 << t
        q = max(best[s][masks[s]][0] for s in range(m))
        tours = tuple(best[s][masks[s]][1] for s in range(m))
        if top is None or q < top[0] or (q == top[0] and tours < top[1]):
            top = (q, tours)
    return top[1], top[0]
