from __future__ import annotations

import numpy as np
import pytest

from sourcerank.datasets import florentine_families
from sourcerank.diffusion import Observation
from sourcerank.graph import Graph


def path_graph(n: int) -> Graph:
    return Graph.from_arcs(n, [(i, i + 1) for i in range(n - 1)], directed=False)


def star_graph(leaves: int) -> Graph:
    return Graph.from_arcs(leaves + 1, [(0, i) for i in range(1, leaves + 1)], directed=False)


def random_connected(n: int, extra: int, rng) -> Graph:
    """Random tree plus ``extra`` random edges."""
    arcs = [(int(rng.integers(i)), i) for i in range(1, n)]
    for _ in range(extra):
        a, b = rng.choice(n, 2, replace=False)
        arcs.append((int(a), int(b)))
    return Graph.from_arcs(n, arcs, directed=False)


# Worked example: topology reconstructed from the narrative (paths
# 10-6-7-8-12, 7-9-13, 7-4-5-1, 7-8-5-1 and edge 10-13).
WORKED_EDGES = [
    (10, 6), (6, 7), (7, 8), (8, 12), (7, 9), (9, 13),
    (7, 4), (4, 5), (5, 1), (8, 5), (10, 13),
]


def minutes(hhmm: str) -> float:
    h, m = hhmm.split(":")
    return 60 * int(h) + int(m)


@pytest.fixture
def worked_example():
    g = Graph.from_edges(WORKED_EDGES, directed=False)
    tau = {6: minutes("6:05"), 12: minutes("8:05"), 13: minutes("8:10"), 1: minutes("9:00")}
    obs = Observation(frozenset(range(g.node_count)), {g.index_of(k): v for k, v in tau.items()})
    return g, obs


@pytest.fixture
def florentine():
    return florentine_families()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
