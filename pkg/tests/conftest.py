import numpy as np
import pytest

from pairnet.netcore import Graph, ProbMatrix, RngStream, sample_graph


def random_graph(n: int, density: float, seed: int) -> Graph:
    """Erdos-Renyi draw used as generic test input."""
    p = np.full((n, n), density)
    np.fill_diagonal(p, 0.0)
    return sample_graph(ProbMatrix(n, p), RngStream(seed))


def random_prob_matrix(n: int, seed: int) -> ProbMatrix:
    gen = np.random.default_rng(seed)
    m = gen.random((n, n))
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, 0.0)
    return ProbMatrix(n, m)


@pytest.fixture
def rng():
    return RngStream(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
