import itertools

import numpy as np
import pytest

from whittlenet.topology import NetworkGraph


def graph_from_edges(n, edges, d=0.5):
    adj = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        adj[i, j] = adj[j, i] = True
    return NetworkGraph(np.zeros((n, 2)), adj, d)


def brute_independent_sets(g):
    n = g.n_users
    for r in range(n + 1):
        for combo in itertools.combinations(range(n), r):
            if g.is_independent(combo):
                yield combo


@pytest.fixture
def path3():
    return graph_from_edges(3, [(0, 1), (1, 2)])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
