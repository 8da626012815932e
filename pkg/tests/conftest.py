import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stickslip.model import CASE_A, CASE_B

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE = {}


@pytest.fixture(params=["case_a", "case_b"])
def preset(request):
    return {"case_a": CASE_A, "case_b": CASE_B}[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(
            f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        )
