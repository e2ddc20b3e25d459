import numpy as np
import pytest

from asyncact import SystemConfig, simulate_trial

# lines collected by the acceptance suite, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_config():
    return SystemConfig(num_aps=3, antennas_per_ap=4, num_devices=12, sig_len=6, max_delay=2)


@pytest.fixture(scope="session")
def small_data(small_config):
    return simulate_trial(small_config, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
