from __future__ import annotations

import numpy as np
import pytest

from thermbath.rng import SplitMix64


@pytest.fixture
def rng():
    return SplitMix64(20240611)


def diag_state(*p):
    return np.diag(np.asarray(p, dtype=float))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
