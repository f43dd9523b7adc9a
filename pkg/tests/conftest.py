"""Shared fixtures: the 4-agent topology family used across tests.

Topologies 1 and 2 disagree only on links among agents {1, 3, 4}, leaving
agent 2's links untouched, so with agent 1 observed the pair is undetectable.
Topology 3 changes the (2, 3) link, making the union difference graph
connected.
"""
import numpy as np
import pytest

from zdalab import graphs


@pytest.fixture(scope="session")
def topo1():
    return graphs.Topology.from_edges(
        1, 4, [(1, 2, 1.0), (2, 3, 1.0), (2, 4, 1.0), (3, 4, 1.0)]
    )


@pytest.fixture(scope="session")
def topo2():
    return graphs.Topology.from_edges(
        2,
        4,
        [(1, 2, 1.0), (2, 3, 1.0), (2, 4, 1.0), (3, 4, 0.5), (1, 3, 1.0), (1, 4, 1.0)],
    )


@pytest.fixture(scope="session")
def topo3():
    return graphs.Topology.from_edges(
        3, 4, [(1, 2, 1.0), (2, 3, 2.0), (2, 4, 1.0), (3, 4, 1.0)]
    )


# Weighted complete 4-agent graph with Laplacian spectrum {0, 1, 4, 9}:
# distinct eigenvalues with exactly rational square-root ratios (1 : 2 : 3),
# so the common modal period is 2*pi.
K4_WEIGHTS = [
    (1, 2, 0.23278588565716107),
    (1, 3, 2.2174750085926673),
    (1, 4, 3.444083512674263),
    (2, 3, 0.16102969997834743),
    (2, 4, 0.36250371637275364),
    (3, 4, 0.5821221767248053),
]


@pytest.fixture(scope="session")
def k4_149():
    return graphs.Topology.from_edges(1, 4, K4_WEIGHTS)


@pytest.fixture(scope="session")
def k4_149_twin():
    perturbed = [
        (i, j, w + (1e-9 if (i, j) == (3, 4) else 0.0)) for i, j, w in K4_WEIGHTS
    ]
    return graphs.Topology.from_edges(2, 4, perturbed)


def random_connected_topology(rng, n, id=1, lo=0.2, hi=2.0):
    """Random weighted graph guaranteed connected: a random spanning tree
    plus each remaining edge with probability 1/2."""
    a = np.zeros((n, n))
    order = rng.permutation(n)
    for k in range(1, n):
        i, j = order[k], order[rng.integers(0, k)]
        a[i, j] = a[j, i] = rng.uniform(lo, hi)
    for i in range(n):
        for j in range(i + 1, n):
            if a[i, j] == 0.0 and rng.random() < 0.5:
                a[i, j] = a[j, i] = rng.uniform(lo, hi)
    return graphs.Topology(id=id, n=n, adjacency=a)
