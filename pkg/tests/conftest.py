import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xltrack.channel import SystemConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_cfg():
    return SystemConfig(M=16, N_RF=4, N=8, P=4)


@pytest.fixture(scope="session")
def desk_cfg():
    return SystemConfig()


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config._acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config._acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """``criterion(name, ok, detail)`` records one PASS/FAIL line and asserts ``ok``."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        assert ok, line

    return record
