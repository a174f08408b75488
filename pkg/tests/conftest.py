import numpy as np
import pytest

from smoothmc.crn import SIR_MODEL, SIR_PROPERTY, parse_model
from smoothmc.monitor import parse_property


@pytest.fixture(scope="session")
def sir():
    return parse_model(SIR_MODEL)


@pytest.fixture(scope="session")
def sir_property(sir):
    return parse_property(SIR_PROPERTY, sir.species)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One PASS/FAIL line per acceptance criterion, repeated in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
