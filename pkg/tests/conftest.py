import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from relmp.core import Cell, Complex, Graph  # noqa: E402
from relmp.lift import lift_clique  # noqa: E402

# cells ordered by (dim, vertices): {i},{j},{k},{i,j},{j,k}
PATH_ATILDE = np.array([
    [1, 1, 0, 2, 0],
    [1, 1, 1, 2, 2],
    [0, 1, 1, 0, 2],
    [1, 2, 0, 1, 1],
    [0, 2, 1, 1, 1],
], dtype=float)


@pytest.fixture
def path_graph():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def path_lift(path_graph):
    return lift_clique(path_graph, max_dim=1)


@pytest.fixture
def path_structure(path_lift):
    return path_lift.structure


def small_complex():
    """Five vertices, edges 01 12 23 24 34 and the triangle 234."""
    c = [Cell(v, 0, (v,)) for v in range(5)]
    edges = [(0, 1), (1, 2), (2, 3), (2, 4), (3, 4)]
    for i, e in enumerate(edges):
        c.append(Cell(5 + i, 1, e, tuple(sorted(e))))
    c.append(Cell(10, 2, (2, 3, 4), (7, 8, 9)))
    return Complex(tuple(c))


@pytest.fixture
def reference_complex():
    return small_complex()


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
