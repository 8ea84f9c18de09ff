import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def small_model():
    from cheshire.hawkes import NetworkModel

    A = np.array([[0.0, 0.6, 0.0], [0.4, 0.0, 0.3], [0.2, 0.5, 0.0]])
    return NetworkModel(A, [0.5, 0.2, 0.3], 2.0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
