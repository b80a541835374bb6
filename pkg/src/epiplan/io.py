"""JSON (de)serialization for scenarios, with schema validation.

Lengths are meters, times seconds, speeds m/s.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .core import (
    DEFAULT_DT,
    DEFAULT_SPEED_FACTORS,
    FAULT_KINDS,
    Bounds,
    FaultEvent,
    InvalidScenarioError,
    RobotSpec,
    Scenario,
    Task,
)

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["bounds", "tasks", "robots"],
    "additionalProperties": False,
    "properties": {
        "bounds": {
            "type": "object",
            "required": ["xmin", "ymin", "xmax", "ymax"],
            "additionalProperties": False,
            "properties": {k: {"type": "number"} for k in ("xmin", "ymin", "xmax", "ymax")},
        },
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "position"],
                "additionalProperties": False,
                "properties": {"id": {"type": "integer"}, "position": _POINT},
            },
        },
        "robots": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "start_depot", "end_depot", "max_speed"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer"},
                    "start_depot": _POINT,
                    "end_depot": _POINT,
                    "max_speed": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "r_c": {"type": "number", "exclusiveMinimum": 0},
        "r_s": {"type": "number", "minimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "faults": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["robot_id", "time", "kind"],
                "additionalProperties": False,
                "properties": {
                    "robot_id": {"type": "integer"},
                    "time": {"type": "number", "minimum": 0},
                    "kind": {"enum": list(FAULT_KINDS)},
                },
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "speed_factors": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "allow_multiple_faults": {"type": "boolean"},
    },
}


def _field_path(err: jsonschema.ValidationError) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def scenario_from_dict(doc: dict) -> Scenario:
    _validate(doc, SCENARIO_SCHEMA)
    b = doc["bounds"]
    sc = Scenario(
        bounds=Bounds(b["xmin"], b["ymin"], b["xmax"], b["ymax"]),
        tasks=tuple(Task(t["id"], tuple(map(float, t["position"]))) for t in doc["tasks"]),
        robots=tuple(
            RobotSpec(r["id"], tuple(map(float, r["start_depot"])), tuple(map(float, r["end_depot"])),
                      float(r["max_speed"]))
            for r in doc["robots"]
        ),
        r_c=float(doc.get("r_c", 5.0)),
        r_s=float(doc["r_s"]) if "r_s" in doc else None,
        dt=float(doc.get("dt", DEFAULT_DT)),
        faults=tuple(FaultEvent(f["robot_id"], float(f["time"]), f["kind"]) for f in doc.get("faults", [])),
        seed=int(doc.get("seed", 0)),
        speed_factors=tuple(map(float, doc.get("speed_factors", DEFAULT_SPEED_FACTORS))),
        allow_multiple_faults=bool(doc.get("allow_multiple_faults", False)),
    )
    return sc.validate()


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "bounds": {"xmin": sc.bounds.xmin, "ymin": sc.bounds.ymin, "xmax": sc.bounds.xmax, "ymax": sc.bounds.ymax},
        "tasks": [{"id": t.id, "position": list(t.position)} for t in sc.tasks],
        "robots": [
            {"id": r.id, "start_depot": list(r.start_depot), "end_depot": list(r.end_depot), "max_speed": r.max_speed}
            for r in sc.robots
        ],
        "r_c": sc.r_c,
        "r_s": sc.r_s,
        "dt": sc.dt,
        "faults": [{"robot_id": f.robot_id, "time": f.time, "kind": f.kind} for f in sc.faults],
        "seed": sc.seed,
        "speed_factors": list(sc.speed_factors),
        "allow_multiple_faults": sc.allow_multiple_faults,
    }


def load_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_json(path))


def save_scenario(sc: Scenario, path) -> None:
    write_json(path, scenario_to_dict(sc))


PLAN_SCHEMA = {
    "type": "object",
    "required": ["mode", "tours", "fitness"],
    "properties": {
        "mode": {"enum": ["minmax", "reward", "bilevel"]},
        "tours": {
            "type": "object",
            "patternProperties": {"^[1-9][0-9]*$": {"type": "array", "items": {"type": "integer", "minimum": 1}}},
            "additionalProperties": False,
        },
        "fitness": {
            "type": "object",
            "required": ["makespan", "r_tot", "p_tot", "objective"],
            "properties": {
                "makespan": {"type": "number"},
                "r_tot": {"type": "number"},
                "p_tot": {"type": "number"},
                # infinity is written as a JSON number by json.dumps
                "objective": {"type": "number"},
                "interaction_events": {"type": "array"},
                "durations": {"type": "array", "items": {"type": "number"}},
                "q_star": {"type": ["number", "null"]},
                "feasible": {"type": "boolean"},
            },
        },
        "history": {"type": "array", "items": {"type": "number"}},
        "timelines": {"type": "object"},
    },
}


def _validate(doc, schema) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise InvalidScenarioError(errors[0].message, _field_path(errors[0]))


def plan_from_dict(doc: dict, scenario: Scenario | None = None):
    from .planner import Plan
    from .planner.chromosome import is_partition

    _validate(doc, PLAN_SCHEMA)
    plan = Plan.from_dict(doc)
    if scenario is not None:
        if len(plan.tours) != scenario.m:
            raise InvalidScenarioError(f"plan has {len(plan.tours)} tours for {scenario.m} robots", "tours")
        if not is_partition(plan.tours, scenario.n):
            raise InvalidScenarioError("tours must partition the scenario's tasks", "tours")
    return plan


def load_plan(path, scenario: Scenario | None = None):
    return plan_from_dict(load_json(path), scenario)


def save_plan(plan, path, scenario: Scenario | None = None) -> None:
    write_json(path, plan.to_dict(scenario))
