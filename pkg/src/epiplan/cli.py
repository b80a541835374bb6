"""Command-line front end: gen, plan, simulate, compare, oracle.

Errors are reported as one JSON object on stderr with a nonzero exit code.
A ``--config`` file (JSON, or YAML by extension) overrides flag values; keys
are flag names with dashes or underscores, either at top level or under a
section named after the command.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .core import FAULT_KINDS, EpiplanError, InvalidScenarioError
from .planner import MINMAX, GaParams, brute_force_mtsp, solve
from .planner.fitness import MODES
from .replanner import MctsParams
from .sim import POLICIES, CSV_COLUMNS, SimParams, generate_faults, generate_scenario, run, write_csv
from .sim.batch import COMPARE_COLUMNS, ExperimentSpec, compare

EXIT_USAGE, EXIT_INPUT, EXIT_IO = 2, 3, 4


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_INPUT, **extra):
        super().__init__(message)
        self.kind, self.code, self.extra = kind, code, extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage_error", f"{self.prog}: {message}", EXIT_USAGE)


def _add_ga(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("planner")
    g.add_argument("--mode", choices=MODES, default=MINMAX)
    g.add_argument("--delta", type=float, default=0.3)
    g.add_argument("--sigma", type=float, default=0.5)
    g.add_argument("--population", type=int, default=100)
    g.add_argument("--generations", type=int, default=500)
    g.add_argument("--refinement", choices=("none", "greedy", "two_opt"), default="two_opt")
    g.add_argument("--workers", type=int, default=1)


def _add_sim(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("simulation")
    g.add_argument("--budget", type=int, default=200, help="MCTS simulations per replan")
    g.add_argument("--exploration", type=float, default=2 ** 0.5)
    g.add_argument("--timeout-factor", type=float, default=10.0)
    g.add_argument("--particles", action="store_true", help="include belief particles in the trace")


def _add_world(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario template")
    g.add_argument("--n-tasks", type=int, default=10)
    g.add_argument("--n-robots", type=int, default=3)
    g.add_argument("--size", type=float, default=30.0)
    g.add_argument("--speed", type=float, default=5.0)
    g.add_argument("--r-c", type=float, default=5.0)
    g.add_argument("--faults", type=int, default=0)
    g.add_argument("--fault-kinds", nargs="+", choices=FAULT_KINDS, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="epiplan", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON or YAML file whose values override flags")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a random scenario")
    _add_world(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("plan", help="solve the allocation problem")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_ga(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="execute a plan under faults")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--policy", choices=POLICIES, default="epistemic")
    p.add_argument("--seed", type=int, default=0)
    _add_sim(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("compare", help="epistemic (bilevel plan) against baseline (minmax plan) over seeds")
    _add_world(p)
    p.set_defaults(faults=1)
    p.add_argument("--seeds", type=int, default=20, help="number of seeds, starting at --seed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cycle-kinds", action="store_true")
    _add_ga(p)
    _add_sim(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel seed runs")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("oracle", help="exact minmax optimum by enumeration")
    p.add_argument("--scenario", required=True)
    p.add_argument("--limit", type=int, default=8)
    p.add_argument("--out", default=None)
    return ap


def _load_config(path: str) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError("io_error", f"{p}: {exc.strerror or exc}", EXIT_IO, path=str(p)) from exc
    try:
        if p.suffix.lower() in (".yaml", ".yml"):
            import yaml

            doc = yaml.safe_load(text) or {}
        else:
            doc = json.loads(text)
    except Exception as exc:
        raise CliError("config_error", f"{p}: {exc}", path=str(p)) from exc
    if not isinstance(doc, dict):
        raise CliError("config_error", f"{p}: top level must be a mapping", path=str(p))
    return doc


def apply_config(args: argparse.Namespace, doc: dict) -> argparse.Namespace:
    flat = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    flat.update(doc.get(args.command, {}) or {})
    known = vars(args)
    for key, value in flat.items():
        name = key.replace("-", "_")
        if name in ("command", "config"):
            continue
        if name not in known:
            raise CliError("config_error", f"unknown option {key!r} for {args.command}", field=key)
        setattr(args, name, value)
    return args


def _ga_params(args, seed: int) -> GaParams:
    try:
        return GaParams(population=args.population, generations=args.generations, refinement=args.refinement,
                        mode=args.mode, delta=args.delta, sigma=args.sigma, seed=seed, workers=args.workers)
    except ValueError as exc:
        raise CliError("invalid_parameter", str(exc)) from exc


def _sim_params(args) -> SimParams:
    try:
        mcts = MctsParams(budget=args.budget, c=args.exploration)
    except ValueError as exc:
        raise CliError("invalid_parameter", str(exc)) from exc
    return SimParams(mcts=mcts, timeout_factor=args.timeout_factor, include_particles=args.particles)


def cmd_gen(args) -> dict:
    sc = generate_scenario(args.seed, args.n_tasks, args.n_robots, args.size, args.speed, args.r_c)
    if args.faults:
        # fault times are drawn against the minmax makespan of a quick plan
        nominal = solve(sc, GaParams(population=40, generations=100, seed=args.seed))
        sc = sc.with_faults(generate_faults(sc.m, nominal.makespan, args.seed, args.faults, args.fault_kinds, sc.dt))
    io.save_scenario(sc, args.out)
    return {"scenario": args.out, "tasks": sc.n, "robots": sc.m, "faults": len(sc.faults)}


def cmd_plan(args) -> dict:
    sc = io.load_scenario(args.scenario)
    plan = solve(sc, _ga_params(args, args.seed))
    io.save_plan(plan, args.out, sc)
    return {"plan": args.out, "mode": plan.mode, "makespan": plan.makespan,
            "interactions": plan.fitness.interaction_count, "objective": plan.fitness.objective}


def cmd_simulate(args) -> dict:
    sc = io.load_scenario(args.scenario)
    plan = io.load_plan(args.plan, sc)
    trace, metrics = run(sc, plan, args.policy, args.seed, _sim_params(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.write(out / "trace.jsonl")
    io.write_json(out / "metrics.json", metrics.to_dict())
    write_csv([metrics.csv_row()], out / "metrics.csv", CSV_COLUMNS)
    return metrics.to_dict()


def cmd_compare(args) -> dict:
    if args.seeds < 1:
        raise CliError("invalid_parameter", "at least one seed is required", field="seeds")
    spec = ExperimentSpec(
        seeds=tuple(range(args.seed, args.seed + args.seeds)), n_tasks=args.n_tasks, n_robots=args.n_robots,
        size=args.size, speed=args.speed, r_c=args.r_c, faults=args.faults,
        fault_kinds=tuple(args.fault_kinds) if args.fault_kinds else None, cycle_kinds=args.cycle_kinds,
        delta=args.delta, sigma=args.sigma, ga=replace(_ga_params(args, 0), workers=1),
        sim=_sim_params(args), workers=args.jobs,
    )
    rows, summary = compare(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "compare.csv", COMPARE_COLUMNS)
    io.write_json(out / "summary.json", summary)
    return summary


def cmd_oracle(args) -> dict:
    sc = io.load_scenario(args.scenario)
    tours, q = brute_force_mtsp(sc, limit=args.limit)
    res = {"makespan": q, "tours": {str(k + 1): list(t) for k, t in enumerate(tours)}}
    if args.out:
        io.write_json(args.out, res)
    return res


COMMANDS = {"gen": cmd_gen, "plan": cmd_plan, "simulate": cmd_simulate, "compare": cmd_compare, "oracle": cmd_oracle}


def _fail(kind: str, message: str, code: int, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            apply_config(args, _load_config(args.config))
        result = COMMANDS[args.command](args)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code, **exc.extra)
    except InvalidScenarioError as exc:
        return _fail("invalid_input", exc.reason, EXIT_INPUT, field=exc.path)
    except EpiplanError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_INPUT)
    except json.JSONDecodeError as exc:
        return _fail("invalid_json", str(exc), EXIT_INPUT)
    except OSError as exc:
        return _fail("io_error", str(exc), EXIT_IO)
    except ValueError as exc:
        return _fail("invalid_parameter", str(exc), EXIT_INPUT)
    sys.stdout.write(json.dumps(result, sort_keys=True, default=str) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
