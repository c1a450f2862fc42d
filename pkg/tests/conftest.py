import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bmtest.simlab import PathRecipe, StableDriver, SVJumpModel, simulate_path
from bmtest.variation import SampledPath

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def brownian_path():
    """Two days of constant-volatility Brownian motion at 5 s."""
    recipe = PathRecipe(True, SVJumpModel.constant(0.25), None, 2, 5.0, seed=101)
    return simulate_path(recipe, 0)[0]


@pytest.fixture(scope="session")
def cauchy_path():
    recipe = PathRecipe(False, SVJumpModel(), StableDriver(1.0, 4.4), 2, 5.0, seed=102)
    return simulate_path(recipe, 0)[0]


@pytest.fixture(scope="session")
def mixed_path():
    recipe = PathRecipe(True, SVJumpModel(), StableDriver(1.0, 0.64), 2, 5.0, seed=103)
    return simulate_path(recipe, 0)[0]


def make_path(values, offsets=None, step=5.0):
    return SampledPath(step, np.asarray(values, dtype=float), offsets)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_record():
    """Record one verdict line per acceptance criterion."""

    def record(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
