import numpy as np
import pytest

from acceptance_report import ACCEPTANCE_LINES
from ftmesh.sampling import SeedSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def seed():
    return SeedSpec(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
