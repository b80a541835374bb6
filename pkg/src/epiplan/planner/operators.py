"""GA operators: modified edge recombination, jump/swap mutations, local refinement.

All operators work on decoded routes internally; the ``Chromosome`` entry
points decode, operate and re-encode so every output is a valid partition.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..core import Point, distance
from .chromosome import Chromosome, Routes, decode, encode

INTRA, INTER = "intra", "inter"
JUMP, SWAP = "jump", "swap"


def _giant_cycle(routes: Routes, n: int) -> list[int]:
    # robot s is node n+s and acts as the delimiter before its route
    seq = []
    for s, r in enumerate(routes, start=1):
        seq.append(n + s)
        seq.extend(r)
    return seq


def adjacency(routes: Routes, n: int) -> dict[int, tuple[int, int]]:
    """(predecessor, successor) of every node in the cyclic giant tour."""
    seq = _giant_cycle(routes, n)
    k = len(seq)
    return {seq[i]: (seq[i - 1], seq[(i + 1) % k]) for i in range(k)}


def erx_routes(a: Routes, b: Routes, n: int, rng: np.random.Generator) -> Routes:
    m = len(a)
    nodes = n + m
    if nodes <= 1:
        return a
    adj_a, adj_b = adjacency(a, n), adjacency(b, n)
    unused = set(range(1, nodes + 1))
    cur = int(rng.integers(1, nodes + 1))
    seq = [cur]
    unused.discard(cur)
    while unused:
        # successors in either parent first, then any parent neighbour, then random
        cands = sorted({adj_a[cur][1], adj_b[cur][1]} & unused)
        if not cands:
            cands = sorted({*adj_a[cur], *adj_b[cur]} & unused)
        if not cands:
            cands = sorted(unused)
        cur = cands[int(rng.integers(len(cands)))]
        seq.append(cur)
        unused.discard(cur)
    start = seq.index(n + 1)
    seq = seq[start:] + seq[:start]
    routes: list[list[int]] = []
    for node in seq:
        if node > n:
            routes.append([])
        else:
            routes[-1].append(node)
    # robot delimiters may appear in any order in the cycle
    order = [node - n for node in seq if node > n]
    out: list[tuple[int, ...]] = [()] * m
    for s, r in zip(order, routes):
        out[s - 1] = tuple(r)
    return tuple(out)


def erx_crossover(parent_a: Chromosome, parent_b: Chromosome, rng: np.random.Generator) -> Chromosome:
    """Modified edge recombination crossover over the giant-tour adjacency."""
    if (parent_a.n, parent_a.m) != (parent_b.n, parent_b.m):
        raise ValueError("parents encode different problem sizes")
    child = erx_routes(decode(parent_a), decode(parent_b), parent_a.n, rng)
    return encode(child, parent_a.n)


def mutate_routes(routes: Routes, scope: str, kind: str, rng: np.random.Generator) -> Routes:
    n = sum(len(r) for r in routes)
    if n < 2:
        return routes
    rs = [list(r) for r in routes]
    if scope == INTRA:
        eligible = [s for s, r in enumerate(rs) if len(r) >= 2]
        if not eligible:
            return routes
        r = rs[eligible[int(rng.integers(len(eligible)))]]
        i, j = (int(x) for x in rng.choice(len(r), size=2, replace=False))
        if kind == SWAP:
            r[i], r[j] = r[j], r[i]
        else:
            t = r.pop(i)
            r.insert(j, t)
    elif scope == INTER:
        if len(rs) < 2:
            return routes
        if kind == SWAP:
            eligible = [s for s, r in enumerate(rs) if r]
            if len(eligible) < 2:
                return routes
            s1, s2 = (eligible[int(x)] for x in rng.choice(len(eligible), size=2, replace=False))
            i = int(rng.integers(len(rs[s1])))
            j = int(rng.integers(len(rs[s2])))
            rs[s1][i], rs[s2][j] = rs[s2][j], rs[s1][i]
        else:
            eligible = [s for s, r in enumerate(rs) if r]
            src = eligible[int(rng.integers(len(eligible)))]
            dst = int(rng.integers(len(rs) - 1))
            dst += dst >= src
            t = rs[src].pop(int(rng.integers(len(rs[src]))))
            rs[dst].insert(int(rng.integers(len(rs[dst]) + 1)), t)
    else:
        raise ValueError(f"unknown mutation scope {scope!r}")
    return tuple(tuple(r) for r in rs)


def mutate(chrom: Chromosome, scope: str, kind: str, rng: np.random.Generator) -> Chromosome:
    """Jump or swap mutation within one route (intra) or across routes (inter)."""
    if kind not in (JUMP, SWAP):
        raise ValueError(f"unknown mutation kind {kind!r}")
    return encode(mutate_routes(decode(chrom), scope, kind, rng), chrom.n)


def _open_length(pts: Sequence[Point]) -> float:
    return sum(distance(pts[k], pts[k + 1]) for k in range(len(pts) - 1))


def two_opt(route: Sequence[int], positions: Mapping[int, Point], start: Point, end: Point) -> tuple[int, ...]:
    """2-opt on the open path start -> tasks -> end; returns a local optimum."""
    best = list(route)
    if len(best) < 2:
        return tuple(best)
    pts = [start, *(positions[t] for t in best), end]
    best_len = _open_length(pts)
    improved = True
    while improved:
        improved = False
        k = len(best)
        for i in range(1, k):
            for j in range(i + 1, k + 1):
                delta = (distance(pts[i - 1], pts[j]) + distance(pts[i], pts[j + 1])
                         - distance(pts[i - 1], pts[i]) - distance(pts[j], pts[j + 1]))
                if delta >= -1e-12:
                    continue
                cand = pts[:i] + pts[i:j + 1][::-1] + pts[j + 1:]
                cand_len = _open_length(cand)
                # full recomputation guards against round-off in the delta
                if cand_len < best_len:
                    best = best[:i - 1] + best[i - 1:j][::-1] + best[j:]
                    pts, best_len, improved = cand, cand_len, True
                    break
            if improved:
                break
    return tuple(best)


def greedy_refine(route: Sequence[int], start: Point, positions: Mapping[int, Point]) -> tuple[int, ...]:
    """Nearest-neighbour ordering of the route's tasks from ``start``; ties to lowest id."""
    left = sorted(route)
    out = []
    cur = start
    while left:
        nxt = min(left, key=lambda t: (distance(cur, positions[t]), t))
        out.append(nxt)
        left.remove(nxt)
        cur = positions[nxt]
    return tuple(out)


def refine_routes(routes: Routes, how: str, positions: Mapping[int, Point],
                  starts: Sequence[Point], ends: Sequence[Point]) -> Routes:
    if how == "none":
        return routes
    if how == "two_opt":
        return tuple(two_opt(r, positions, starts[s], ends[s]) for s, r in enumerate(routes))
    if how == "greedy":
        return tuple(greedy_refine(r, starts[s], positions) for s, r in enumerate(routes))
    raise ValueError(f"unknown refinement {how!r}")
