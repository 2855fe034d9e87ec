import math

import pytest
from hypothesis import HealthCheck, settings

from sntrap.params import crystal_params, get_material, mass_for_alpha

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

OMEGA0 = 2.0 * math.pi * 10.0


@pytest.fixture(scope="session")
def silicon():
    return get_material("silicon")


@pytest.fixture(scope="session")
def osmium():
    return get_material("osmium")


@pytest.fixture(scope="session")
def si_params(silicon):
    """Silicon sphere of 1e15 u."""
    return crystal_params(silicon, 1e15 * 1.66053906660e-27)


def params_at_alpha(material, alpha, omega0=OMEGA0):
    return crystal_params(material, mass_for_alpha(material, alpha, omega0))


# verdict lines collected by the acceptance suite, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
