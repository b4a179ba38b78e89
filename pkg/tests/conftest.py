import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    for mod in list(sys.modules.values()):
        results = getattr(mod, "ACCEPTANCE_RESULTS", None)
        if results:
            break
    else:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status, title, elapsed, detail = results[n]
        line = f"criterion {n:2d}: {status} ({elapsed:6.1f} s) {title}"
        terminalreporter.write_line(line + (f" -- {detail}" if detail else ""))
