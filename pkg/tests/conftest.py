import math

import pytest

from conetrace.cone import solve_strong, solve_weak
from conetrace.spectrum import AxisymmetricOpening

RIGHT = math.pi / 2

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical checks")


@pytest.fixture(scope="session")
def criteria_log():
    """Collects one line per acceptance criterion for the terminal summary."""
    return _criteria


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_criteria, key=lambda s: int(s.split()[1].rstrip(":abcdefgh"))):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def half_space():
    return AxisymmetricOpening(3, RIGHT)


@pytest.fixture(scope="session")
def weak_solution(half_space):
    """``u_k`` for ``k = 1``, ``q = 1.5`` on the default 600 x 96 grid, ``T = 12``."""
    return solve_weak(half_space, 1.5, 1.0)


@pytest.fixture(scope="session")
def strong_solution(half_space):
    return solve_strong(half_space, 1.5)
