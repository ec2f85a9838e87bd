import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def record_acceptance(name, passed, detail=""):
    line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cone_target():
    from ample_sawtooth.dyadic import DyadicCube
    return DyadicCube(2, 4, 18)


@pytest.fixture(scope="session")
def cone_spec(cone_target):
    from ample_sawtooth.drift import cone_singular
    return cone_singular([cone_target], 0.5)


@pytest.fixture(scope="session")
def cone_sawtooth(cone_spec):
    from ample_sawtooth.sawtooth import build_ample_sawtooth
    return build_ample_sawtooth(cone_spec, 0.1, 0.1, k_max=6)


@pytest.fixture
def polar_pt():
    def f(r, t):
        return np.array([r * math.cos(t), r * math.sin(t)])
    return f
