import numpy as np
import pytest

from vowelgraph.graph import Graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_triangles(bridge: bool) -> Graph:
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
    if bridge:
        edges.append((2, 3))
    return Graph.from_edges(6, edges)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
