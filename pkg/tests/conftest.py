import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scenario_dir():
    return SCENARIOS


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
