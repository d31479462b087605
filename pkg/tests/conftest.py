import numpy as np
import pytest

# filled by test_acceptance.py, echoed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def worked_probs():
    # ranked labels 0, 2, 3, 4, 1, 5 so positional costs read [0, 1, 1, 1, 0, 1]
    return np.array([0.4, 0.03, 0.3, 0.2, 0.05, 0.02])
