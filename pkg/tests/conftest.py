import numpy as np
import pytest

from extremeclust.simgen import simulate_study


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def study3():
    return simulate_study(3, 101)


@pytest.fixture(scope="session")
def study1():
    return simulate_study(1, 101)


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_acceptance", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
