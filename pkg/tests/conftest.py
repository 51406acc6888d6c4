import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ricciheat.geometry import FlatEuclidean, build_complex, graded_times
from ricciheat.green import green_family

settings.register_profile("ricciheat", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("ricciheat")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def flat_disk():
    """Radial unit-resolution-32 flat disk of radius 2 with a graded time grid."""
    model = FlatEuclidean(2, 2.0, 32)
    times = graded_times(0.5, 1 / 32, explicit_steps=128)
    return build_complex(model, 2.0, times)


@pytest.fixture(scope="session")
def planar_family():
    """Neumann and Dirichlet kernels on flat planar balls k = 1..4."""
    model = FlatEuclidean(2, 4.5, 16, "planar")
    neu = green_family(model, "neumann", (None, 0.0), [1, 2, 3, 4], 1.0)
    dir_ = green_family(model, "dirichlet", (None, 0.0), [1, 2, 3, 4], 1.0)
    return neu, dir_


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
