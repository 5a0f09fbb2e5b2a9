import numpy as np
import pytest

from ovsfaccel import resources


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fresh_lut_warning():
    resources._warned_synthetic = False
    yield
    resources._warned_synthetic = True


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
