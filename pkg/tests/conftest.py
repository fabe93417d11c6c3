import numpy as np
import pytest

from stkd.nn import Network

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_net(rng, sizes):
    return Network.mlp(sizes[0], sizes[1:-1], sizes[-1], rng)
