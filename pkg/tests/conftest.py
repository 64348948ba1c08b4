import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

PHI = (1 + math.sqrt(5)) / 2
GOLDEN = np.array([PHI, 1.0]) / math.hypot(PHI, 1.0)

_ACCEPTANCE = {}


def record_acceptance(key, passed, detail):
    _ACCEPTANCE[key] = (bool(passed), detail)
    print(f"{key}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Load the compiled integrator once so timed sections exclude JIT compilation."""
    from torusflow.core import constant_field
    from torusflow.integrator import flow_map

    flow_map(constant_field([1.0, 0.5]), np.zeros(2), 1.0)


@pytest.fixture(scope="session")
def golden():
    return GOLDEN.copy()


@pytest.fixture(scope="session")
def example51():
    from torusflow.presets import preset

    return preset("example_5_1")


@pytest.fixture(scope="session")
def arctan():
    from torusflow.presets import preset

    return preset("gradient_arctan")


@pytest.fixture(scope="session")
def vanishing():
    from torusflow.presets import preset

    return preset("vanishing_stepanoff")
