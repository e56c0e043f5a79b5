import numpy as np
import pytest

import riskmap as rm


@pytest.fixture
def four_cycle() -> rm.SpatialGraph:
    return rm.load_edge_list([("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")])


@pytest.fixture
def two_node_path() -> rm.SpatialGraph:
    return rm.load_edge_list([("a", "b")])


def tri_params(risks, alpha, b):
    k = len(risks)
    return rm.HmrfParams(risks, alpha, rm.InteractionSpec(rm.InteractionKind.TRI_DIAGONAL, k, b))


def potts_params(risks, alpha, b):
    k = len(risks)
    return rm.HmrfParams(risks, alpha, rm.InteractionSpec(rm.InteractionKind.POTTS, k, b))


def random_small_instance(rng, max_nodes=8, max_classes=4):
    """Random connected-ish small graph with data and parameters."""
    n = int(rng.integers(1, max_nodes + 1))
    k = int(rng.integers(1, max_classes + 1))
    edges = set()
    for j in range(1, n):
        a = int(rng.integers(j))
        edges.add((a, j))
    extra = int(rng.integers(0, n + 1))
    for _ in range(extra):
        a, b = rng.integers(n, size=2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    adjacency = [[] for _ in range(n)]
    for a, b in edges:
        adjacency[a].append(b)
        adjacency[b].append(a)
    from riskmap.graph import from_adjacency

    graph = from_adjacency(adjacency)
    pops = rng.integers(0, 500, size=n)
    risks = np.sort(rng.uniform(1e-4, 0.5, size=k))
    labels = rng.integers(k, size=n)
    counts = rng.poisson(pops * risks[labels])
    data = rm.ObservedData(counts=counts, populations=pops)
    alpha = rng.normal(scale=0.5, size=k)
    alpha -= alpha[-1]
    return graph, data, risks, alpha
