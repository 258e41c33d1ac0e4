import numpy as np
import pytest

from nvreadout.model import TWO_PI, DriveParams, SystemParams
from nvreadout.noise import PhaseNoiseTable
from nvreadout.readout import ProtocolParams


@pytest.fixture(scope="session")
def base():
    return SystemParams.published_defaults()


@pytest.fixture(scope="session")
def proto():
    return ProtocolParams()


@pytest.fixture(scope="session")
def table():
    return PhaseNoiseTable.default()


@pytest.fixture(scope="session")
def silent():
    return PhaseNoiseTable.silent()


@pytest.fixture
def drive_at():
    def make(params, power_dbm=-15.0, phase=0.0):
        return DriveParams.from_dbm(power_dbm, params.omega_d, phase)
    return make


def rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


GAMMA = TWO_PI * 330e3


_REPORT = []


def report(line):
    """Queue a line for the acceptance summary printed at the end of the run."""
    _REPORT.append(line)


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
