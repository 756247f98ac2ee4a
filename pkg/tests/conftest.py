import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from glvortex.vortex2d import solve_vortex_profile

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def profile_unit():
    return solve_vortex_profile(1.0, 20.0, 4001)


@pytest.fixture(scope="session")
def profile_02():
    return solve_vortex_profile(0.2, 5.0, 4001)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """record(number, passed, detail) for the acceptance summary printed at the end of the run."""
    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
