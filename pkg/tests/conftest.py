import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bwot._backend import HAVE_NUMBA

settings.register_profile(
    "bwot",
    max_examples=int(os.environ.get("BWOT_HYPOTHESIS_EXAMPLES", "60")),
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("bwot")

BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])

# criterion number -> (passed, seconds, summary); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, seconds, summary = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  ({seconds:5.1f}s)  {summary}"
        )
