import numpy as np
import pytest

from frares import FracSystem, toy_system

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_system(rng, n_max=4, p_max=5, p_min=1):
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(p_min, p_max + 1))
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    C = rng.standard_normal((p, n))
    alpha = rng.uniform(0.05, 1.95, n)
    return FracSystem(A, C, alpha)


@pytest.fixture
def toy():
    return toy_system()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
