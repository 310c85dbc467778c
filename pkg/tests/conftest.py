import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from swanson_ssusy.expr import parse
from swanson_ssusy.grid import Grid
from swanson_ssusy.operators import LadderSpec
from swanson_ssusy.ssusy import FactorPair, QuasiSpec
from swanson_ssusy.swanson import SwansonModel, SwansonParams

settings.register_profile("repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def oscillator_model() -> SwansonModel:
    return SwansonModel(SwansonParams(1.0, 0.1, -0.1), LadderSpec(parse("1/sqrt(2)"), parse("x/sqrt(2)")))


@pytest.fixture
def chain() -> tuple[FactorPair, QuasiSpec]:
    return FactorPair(parse("1"), parse("x"), parse("x")), QuasiSpec.split_c(-2.0)


@pytest.fixture
def wide_grid() -> Grid:
    return Grid(-10.0, 10.0, 2000)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion; lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
