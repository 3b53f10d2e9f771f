import numpy as np
import pytest

from smpc_lab import models, solve_are


@pytest.fixture(scope='session')
def ex21():
    model = models.example_2_1()
    w = models.EXAMPLE_2_1_WEIGHTS
    return model, w, solve_are(model.linearization, w)


@pytest.fixture(scope='session')
def ex22():
    model = models.example_2_2()
    w = models.EXAMPLE_2_2_WEIGHTS
    return model, w, solve_are(model.linearization, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
