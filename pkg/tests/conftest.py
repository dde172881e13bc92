import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shearcs.encoding import EncodingOperator, SensitivityMaps
from shearcs.numerics import Grid3
from shearcs.sampling import generate_rpe
from shearcs.simulation import make_coils

settings.register_profile(
    "default",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid16():
    return Grid3.cube(16)


@pytest.fixture(scope="session")
def coils16(grid16):
    return make_coils(grid16, 4, seed=3)


@pytest.fixture(scope="session")
def rpe16():
    return generate_rpe(16, 6, 16)


@pytest.fixture(scope="session")
def enc16(coils16, rpe16):
    return EncodingOperator(coils16, rpe16)


@pytest.fixture(scope="session")
def unit_coil16(grid16):
    return SensitivityMaps(grid16, np.ones((1,) + grid16.shape))


def cartesian_coords(shape):
    """Every grid point of a centred Cartesian k-space, x running fastest."""
    axes = [np.arange(n) - n // 2 for n in shape]
    K = np.meshgrid(*axes, indexing="ij")
    return np.stack([k.ravel(order="F") for k in K], axis=1)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
