import numpy as np
import pytest

from roughsbm.environment import build_environment, zero_environment
from roughsbm.grid import GridSpec
from roughsbm.mollifier import build_kit


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(4.0, 128)


@pytest.fixture(scope="session")
def small_kit(small_grid):
    return build_kit(small_grid)


@pytest.fixture(scope="session")
def grid8():
    return GridSpec(8.0, 256)


@pytest.fixture(scope="session")
def kit8(grid8):
    return build_kit(grid8)


@pytest.fixture(scope="session")
def env8(kit8):
    return build_environment(kit8.grid, 3, 0.25, kit8, n_samples=4)


@pytest.fixture(scope="session")
def zero_env8(kit8):
    return zero_environment(kit8.grid, kit8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
