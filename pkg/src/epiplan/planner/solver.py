"""Genetic algorithm for the minMax mTSP with optional interaction reward."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..core import Scenario, Timeline
from .chromosome import Routes, random_routes
from .fitness import BILEVEL, MINMAX, MODES, REWARD, Evaluator, FitnessReport, RewardParams, plan_timelines, reward_params_for
from .operators import INTER, INTRA, JUMP, SWAP, erx_routes, mutate_routes, refine_routes

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaParams:
    population: int = 100
    generations: int = 500
    crossover_prob: float = 0.9
    p_intra_jump: float = 0.1
    p_intra_swap: float = 0.1
    p_inter_jump: float = 0.1
    p_inter_swap: float = 0.1
    elitism: int = 2
    tournament: int = 3
    refinement: str = "two_opt"
    mode: str = MINMAX
    delta: float = 0.3
    sigma: float = 0.5
    rho: float | None = None
    seed: int = 0
    workers: int = 1
    # second bilevel stage; None reuses ``generations``
    stage2_generations: int | None = None

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        for name in ("crossover_prob", "p_intra_jump", "p_intra_swap", "p_inter_jump", "p_inter_swap", "delta", "sigma"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.refinement not in ("none", "greedy", "two_opt"):
            raise ValueError("refinement must be none, greedy or two_opt")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be in [0, population)")


@dataclass
class Plan:
    tours: tuple[tuple[int, ...], ...]
    fitness: FitnessReport
    mode: str = MINMAX
    history: list[float] = field(default_factory=list)
    stage1_history: list[float] = field(default_factory=list)

    @property
    def makespan(self) -> float:
        return self.fitness.makespan

    def timelines(self, scenario: Scenario) -> list[Timeline]:
        return plan_timelines(scenario, self.tours)

    def to_dict(self, scenario: Scenario | None = None) -> dict:
        d = {
            "mode": self.mode,
            "tours": {str(k + 1): list(t) for k, t in enumerate(self.tours)},
            "fitness": self.fitness.to_dict(),
            "history": list(self.history),
        }
        if scenario is not None:
            d["timelines"] = {
                str(tl.robot_id): {
                    "dt": scenario.dt,
                    "total_duration": tl.total_duration,
                    "path_length": tl.path_length,
                    "task_times": list(tl.task_times),
                    "positions": [[round(x, 6), round(y, 6)] for x, y in tl.positions.tolist()],
                }
                for tl in self.timelines(scenario)
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        tours = tuple(tuple(d["tours"][k]) for k in sorted(d["tours"], key=int))
        return cls(tours=tours, fitness=FitnessReport.from_dict(d["fitness"]), mode=d.get("mode", MINMAX),
                   history=list(d.get("history", [])))


_WORKER_EVAL: tuple | None = None


def _init_worker(evaluator, mode, q_star, delta):
    global _WORKER_EVAL
    _WORKER_EVAL = (evaluator, mode, q_star, delta)


def _score_worker(routes):
    ev, mode, q_star, delta = _WORKER_EVAL
    return _score(ev, routes, mode, q_star, delta)


def _score(ev: Evaluator, routes: Routes, mode: str, q_star, delta) -> tuple[float, float]:
    """(objective, tie-break) used for ranking; the tie-break is total path length."""
    if mode == MINMAX:
        lengths = ev.lengths(routes)
        q = max(ev.duration(s, r) for s, r in enumerate(routes))
        return q, sum(lengths)
    rep = ev.report(routes, mode, q_star, delta)
    return rep.objective, sum(ev.lengths(routes))


class _Ga:
    def __init__(self, scenario: Scenario, params: GaParams, evaluator: Evaluator, rng: np.random.Generator):
        self.sc = scenario
        self.p = params
        self.ev = evaluator
        self.rng = rng
        self.positions = {t.id: t.position for t in scenario.tasks}
        self.starts = [r.start_depot for r in scenario.robots]
        self.ends = [r.end_depot for r in scenario.robots]
        self.cache: dict = {}
        self._refined: dict = {}
        self.pool = None

    def score_all(self, pop: list[Routes], mode, q_star=None, delta=None) -> list[tuple[float, float]]:
        key = (mode, q_star, delta)
        todo = [r for r in dict.fromkeys(pop) if (key, r) not in self.cache]
        if todo:
            if self.pool is not None:
                results = list(self.pool.map(_score_worker, todo, chunksize=max(1, len(todo) // (4 * self.p.workers))))
            else:
                results = [_score(self.ev, r, mode, q_star, delta) for r in todo]
            for r, s in zip(todo, results):
                self.cache[(key, r)] = s
        return [self.cache[(key, r)] for r in pop]

    def tournament(self, scores) -> int:
        idx = self.rng.integers(len(scores), size=self.p.tournament)
        return int(min(idx, key=lambda i: (scores[i], i)))

    def refine(self, routes: Routes) -> Routes:
        if routes not in self._refined:
            self._refined[routes] = refine_routes(routes, self.p.refinement, self.positions, self.starts, self.ends)
        return self._refined[routes]

    def offspring(self, pop, scores) -> Routes:
        p, rng, n = self.p, self.rng, self.sc.n
        a = pop[self.tournament(scores)]
        if rng.random() < p.crossover_prob:
            b = pop[self.tournament(scores)]
            child = erx_routes(a, b, n, rng)
        else:
            child = a
        for prob, scope, kind in ((p.p_intra_jump, INTRA, JUMP), (p.p_intra_swap, INTRA, SWAP),
                                  (p.p_inter_jump, INTER, JUMP), (p.p_inter_swap, INTER, SWAP)):
            if rng.random() < prob:
                child = mutate_routes(child, scope, kind, rng)
        return child

    def run(self, pop: list[Routes], generations: int, mode: str, q_star=None, delta=None):
        p = self.p
        scores = self.score_all(pop, mode, q_star, delta)
        history = []
        for _gen in range(generations):
            order = sorted(range(len(pop)), key=lambda i: (scores[i], i))
            elites = []
            for i in order[:p.elitism]:
                cand = pop[i]
                if p.refinement != "none":
                    ref = self.refine(cand)
                    # keep the refined elite only if it does not score worse
                    if ref != cand and self.score_all([ref], mode, q_star, delta)[0] <= scores[i]:
                        cand = ref
                elites.append(cand)
            children = [self.offspring(pop, scores) for _ in range(p.population - len(elites))]
            pop = elites + children
            scores = self.score_all(pop, mode, q_star, delta)
            history.append(min(scores)[0])
        best = min(range(len(pop)), key=lambda i: (scores[i], i))
        return pop, scores, best, history


def solve(scenario: Scenario, ga_params: GaParams | None = None, reward_params: RewardParams | None = None) -> Plan:
    """Run the GA in minmax, reward or bilevel mode; deterministic per seed."""
    p = ga_params or GaParams()
    n, m = scenario.n, scenario.m
    rp = reward_params or reward_params_for(scenario, sigma=p.sigma, rho=p.rho)
    ev = Evaluator(scenario, rp)
    if n == 0:
        routes = tuple(() for _ in range(m))
        q_star = ev.makespan(routes) if p.mode == BILEVEL else None
        return Plan(routes, ev.report(routes, p.mode, q_star=q_star, delta=p.delta), p.mode)
    rng = np.random.default_rng(p.seed)
    ga = _Ga(scenario, p, ev, rng)
    pop = [random_routes(n, m, rng) for _ in range(p.population)]

    def stage(pop, gens, mode, q_star=None, delta=None):
        if p.workers > 1:
            with ProcessPoolExecutor(p.workers, initializer=_init_worker, initargs=(ev, mode, q_star, delta)) as pool:
                ga.pool = pool
                try:
                    return ga.run(pop, gens, mode, q_star, delta)
                finally:
                    ga.pool = None
        return ga.run(pop, gens, mode, q_star, delta)

    if p.mode in (MINMAX, REWARD):
        pop, scores, best, hist = stage(pop, p.generations, p.mode)
        routes = pop[best]
        return Plan(routes, ev.report(routes, p.mode), p.mode, history=hist)

    # bilevel: stage 1 pins the best makespan, stage 2 trades up to delta of it for interactions
    pop, scores, best, hist1 = stage(pop, p.generations, MINMAX)
    q_star = ev.makespan(pop[best])
    gens2 = p.generations if p.stage2_generations is None else p.stage2_generations
    # the stage-1 optimum leads the seeded population, so stage 2 starts feasible
    seeded = [pop[best]] + [r for i, r in enumerate(pop) if i != best]
    pop, scores, best, hist2 = stage(seeded, gens2, BILEVEL, q_star, p.delta)
    routes = pop[best]
    rep = ev.report(routes, BILEVEL, q_star=q_star, delta=p.delta)
    if not math.isfinite(rep.objective):
        raise AssertionError("bilevel stage 2 returned an infeasible plan")
    log.debug("bilevel: Q*=%.3f -> Q=%.3f, R=%.3f, P=%.3f", q_star, rep.makespan, rep.r_tot, rep.p_tot)
    return Plan(routes, rep, BILEVEL, history=hist2, stage1_history=hist1)
