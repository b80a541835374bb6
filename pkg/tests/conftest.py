import logging

import pytest

from epiplan.core import Bounds, RobotSpec, Scenario, Task

logging.getLogger("epiplan").setLevel(logging.ERROR)


def make_scenario(tasks, robots, size=30.0, r_c=5.0, dt=0.1, faults=(), **kw) -> Scenario:
    """``tasks``: list of points; ``robots``: list of (start, end, speed)."""
    return Scenario(
        Bounds(0.0, 0.0, size, size),
        tuple(Task(k + 1, tuple(map(float, p))) for k, p in enumerate(tasks)),
        tuple(RobotSpec(k + 1, tuple(map(float, s)), tuple(map(float, e)), float(v)) for k, (s, e, v) in enumerate(robots)),
        r_c=r_c, dt=dt, faults=tuple(faults), **kw,
    ).validate()


@pytest.fixture
def scenario_factory():
    return make_scenario


# acceptance results, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
