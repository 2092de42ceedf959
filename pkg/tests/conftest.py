import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mplab import EnergyFunctional, Nonlinearity, build_domain  # noqa: E402


@pytest.fixture(scope="session")
def dom1d():
    return build_domain("interval", 129, 2.0)


@pytest.fixture(scope="session")
def phi1d(dom1d):
    return EnergyFunctional(dom1d, Nonlinearity.power(4))


@pytest.fixture(scope="session")
def u_dagger(phi1d):
    """Discrete mountain-pass solution on the 1D grid, from the banded oracle."""
    from oracles import newton_cubic_1d
    from mplab import GridFunction

    return GridFunction(phi1d.domain, newton_cubic_1d(129)[1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
