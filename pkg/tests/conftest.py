import numpy as np
import pytest

from parabolica.central import find_minimizing_central_configuration
from parabolica.configspace import MassSystem


@pytest.fixture(scope="session")
def three_equal():
    return MassSystem((1.0, 1.0, 1.0), 2)


@pytest.fixture(scope="session")
def two_equal():
    return MassSystem((1.0, 1.0), 2)


@pytest.fixture(scope="session")
def cc3(three_equal):
    return find_minimizing_central_configuration(three_equal, restarts=16, seed=0)


@pytest.fixture(scope="session")
def cc2(two_equal):
    return find_minimizing_central_configuration(two_equal, restarts=4, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance outcomes, printed once at the end of the run (visible even with capture on).
ACCEPTANCE_LINES = {}


def record_acceptance(number, title, ok, detail):
    line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
