import numpy as np
import pytest

from scoreflow.numkit import SeededPrng


@pytest.fixture
def rng():
    return SeededPrng(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(99)


# One line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
