import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from smdsr.core import RngStream
from smdsr.models import make_sparse_instance, make_trace_instance

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_glr():
    return make_sparse_instance(50, 3, 1.0, 1.0, 0.0, rng=RngStream(7, 0).generator())


@pytest.fixture
def noisy_glr():
    return make_sparse_instance(50, 3, 0.5, 1.0, 0.1, rng=RngStream(7, 1).generator())


@pytest.fixture
def small_trace():
    return make_trace_instance(6, 4, 2, 0.0, rng=RngStream(7, 2).generator())


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Records one PASS/FAIL line per acceptance criterion; lines are echoed in the summary."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.append((number, line))

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
