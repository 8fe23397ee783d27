import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from penadj.population import FinitePopulation  # noqa: E402


def random_population(rng, n, p, scale=1.0):
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p)
    a = X @ beta + rng.standard_normal(n) * scale + 1.0
    b = X @ (0.5 * beta) + rng.standard_normal(n) * scale
    return FinitePopulation.from_raw(a, b, X)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
