import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(rng, L, B=None):
    shape = (1 << L,) if B is None else (1 << L, B)
    psi = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return psi / np.linalg.norm(psi, axis=0)


# one line per acceptance criterion, printed after the run
_CRITERIA = []


@pytest.fixture
def criterion():
    def record(number, ok, detail):
        _CRITERIA.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1][:-1])):
            terminalreporter.write_line(line)
