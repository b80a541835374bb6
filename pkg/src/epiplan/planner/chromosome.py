"""Next-pointer chromosome encoding of a multi-robot plan.

Columns are numbered 1..n+m. Column ``i <= n`` stores the task that follows
task ``i`` in its robot's route, column ``n+s`` stores robot ``s``'s first
task, and the value ``n+m`` marks the destination depot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import EpiplanError

Routes = tuple[tuple[int, ...], ...]


class MalformedChromosomeError(EpiplanError, ValueError):
    pass


class InvalidRoutesError(EpiplanError, ValueError):
    pass


@dataclass(frozen=True)
class Chromosome:
    next: tuple[int, ...]
    n: int
    m: int

    @property
    def depot(self) -> int:
        return self.n + self.m

    def succ(self, column: int) -> int:
        """Value stored in 1-based ``column``."""
        return self.next[column - 1]

    def to_array(self) -> np.ndarray:
        return np.asarray(self.next, dtype=int)


def decode(chrom: Chromosome, m: int | None = None, n: int | None = None) -> Routes:
    m = chrom.m if m is None else m
    n = chrom.n if n is None else n
    if len(chrom.next) != n + m:
        raise MalformedChromosomeError(f"expected {n + m} columns, got {len(chrom.next)}")
    depot = n + m
    seen = np.zeros(n + 1, dtype=bool)
    routes = []
    for s in range(1, m + 1):
        route = []
        cur = chrom.next[n + s - 1]
        while cur != depot:
            if not 1 <= cur <= n:
                raise MalformedChromosomeError(f"robot {s}: invalid pointer {cur}")
            if seen[cur]:
                raise MalformedChromosomeError(f"task {cur} repeated or cyclic")
            seen[cur] = True
            route.append(cur)
            cur = chrom.next[cur - 1]
        routes.append(tuple(route))
    if n and not seen[1:].all():
        missing = [k for k in range(1, n + 1) if not seen[k]]
        raise MalformedChromosomeError(f"tasks {missing} unreachable from any robot")
    return tuple(routes)


def encode(routes: Sequence[Sequence[int]], n: int | None = None) -> Chromosome:
    m = len(routes)
    flat = [t for r in routes for t in r]
    n = len(flat) if n is None else n
    if sorted(flat) != list(range(1, n + 1)):
        raise InvalidRoutesError("routes must partition tasks 1..n exactly once")
    depot = n + m
    nxt = [0] * (n + m)
    for s, route in enumerate(routes, start=1):
        prev = n + s
        for t in route:
            nxt[prev - 1] = t
            prev = t
        nxt[prev - 1] = depot
    return Chromosome(tuple(nxt), n, m)


def random_routes(n: int, m: int, rng: np.random.Generator) -> Routes:
    """Random permutation split at random cut points; empty routes allowed."""
    perm = (rng.permutation(n) + 1).tolist()
    cuts = sorted(rng.integers(0, n + 1, size=m - 1).tolist())
    bounds = [0, *cuts, n]
    return tuple(tuple(perm[bounds[k]:bounds[k + 1]]) for k in range(m))


def random_chromosome(n: int, m: int, rng: np.random.Generator) -> Chromosome:
    return encode(random_routes(n, m, rng), n)


def is_partition(routes: Sequence[Sequence[int]], n: int) -> bool:
    flat = [t for r in routes for t in r]
    return len(flat) == n and sorted(flat) == list(range(1, n + 1))
