import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import gate

    if gate.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(gate.LINES):
            terminalreporter.write_line(gate.LINES[n])
