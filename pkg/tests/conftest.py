import os
from pathlib import Path

import numpy as np
import pytest

from hjvisc.scenario import Scenario

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"

# acceptance verdict lines, echoed again in the terminal summary
VERDICTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def scenario_paths():
    return sorted(SCENARIOS.glob("*.json"))


@pytest.fixture(scope="session")
def load_scenario():
    cache = {}

    def load(name):
        if name not in cache:
            cache[name] = Scenario.load(SCENARIOS / name)
        return cache[name]
    return load


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture(scope="session")
def sin_solution(load_scenario):
    sc = load_scenario("sin_torus.json")
    from hjvisc.value import solve_stationary
    R = solve_stationary(sc.hamiltonian, sc.grid, sc.lam, sc.data, sc.tau, sc.velocities,
                         tol=sc.tol, method=sc.conjugate_method)
    return sc, R


def cli_env(**extra):
    env = dict(os.environ)
    env.update({k: str(v) for k, v in extra.items()})
    return env
