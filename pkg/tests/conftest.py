import numpy as np
import pytest

from coupled_decent import make_graph


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def path3():
    return make_graph("path", 3)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
