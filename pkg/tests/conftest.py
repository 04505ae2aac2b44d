from __future__ import annotations

import pytest

from bapmsim import experiments as ex
from bapmsim.calibrate import Context
from bapmsim.scenarios import bundled_calibration


@pytest.fixture(scope="session")
def cluster():
    return ex.load_cluster()


@pytest.fixture(scope="session")
def profiles():
    return ex.bundled_profiles()


@pytest.fixture(scope="session")
def ctx():
    return Context.bundled()


@pytest.fixture(scope="session")
def cal():
    return bundled_calibration()


@pytest.fixture(scope="session")
def calibrated(cal, ctx):
    """(cluster, model params, profiles) under the bundled calibration."""
    return (cal.cluster(ctx.cluster), cal.model_params(),
            {k: cal.profile(v) for k, v in ctx.profiles.items()})


# one line per acceptance criterion, printed after the run even when output is captured
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    return ACCEPTANCE
