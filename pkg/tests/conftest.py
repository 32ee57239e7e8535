import numpy as np
import pytest

from bnlab.domain import DomainSpec, eigenbasis
from bnlab.reduced import solve_N4, solve_N5
from bnlab.verification import estimate_constants


@pytest.fixture(scope="session")
def ball5():
    return DomainSpec.create("ball", 5)


@pytest.fixture(scope="session")
def ball4():
    return DomainSpec.create("ball", 4)


@pytest.fixture(scope="session")
def basis5(ball5):
    return eigenbasis(ball5, 1)


@pytest.fixture(scope="session")
def basis4(ball4):
    return eigenbasis(ball4, 1)


@pytest.fixture(scope="session")
def const5(ball5, basis5):
    return estimate_constants(ball5, basis5)


@pytest.fixture(scope="session")
def const4(ball4, basis4):
    return estimate_constants(ball4, basis4)


@pytest.fixture(scope="session")
def reduced5(ball5, basis5, const5):
    return solve_N5(ball5, basis5, 1, 1, c1=const5.c1)


@pytest.fixture(scope="session")
def reduced4(ball4, basis4, const4):
    return solve_N4(ball4, basis4, 1, 1, 0.1, c1=const4.c1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines are collected here and printed once at the end of the session
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(n, name, detail, ok):
        line = f"criterion {n:>2} {name}: {detail} {'PASS' if ok else 'FAIL'}"
        ACCEPTANCE_LINES.append((n, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
