import sys

import pytest

from mtocap.geometry import RadioConfig
from mtocap.simulator import MacParams, measure_link_capacity


@pytest.fixture(scope="session")
def mac():
    return MacParams()


@pytest.fixture(scope="session")
def l_sim(mac):
    return measure_link_capacity(mac)


@pytest.fixture
def cfg():
    return RadioConfig()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
