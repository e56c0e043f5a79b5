"""Synthetic scenario generation for benchmarking the fitting pipeline.

A scenario is a graph, a ground-truth class map, true per-class risks, and
heterogeneous population sizes; observed counts are then Poisson draws.
Class maps are grown as contiguous blobs from random seed nodes so the
spatial prior has actual structure to recover.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .graph import SpatialGraph
from .model import ObservedData


@dataclass(frozen=True)
class Scenario:
    """Ground truth for one synthetic experiment.

    ``true_risks`` need not be sorted: permuted-risk variants deliberately
    place extreme levels next to each other.
    """

    graph: SpatialGraph
    true_labels: np.ndarray
    true_risks: np.ndarray
    populations: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.true_labels, dtype=np.int64)
        risks = np.asarray(self.true_risks, dtype=np.float64)
        pops = np.asarray(self.populations, dtype=np.int64)
        n = self.graph.node_count
        if labels.shape != (n,) or pops.shape != (n,):
            raise ValueError("labels and populations must match the graph")
        if labels.min() < 0 or labels.max() >= risks.size:
            raise ValueError("label out of range for true_risks")
        if np.any(risks < 0) or np.any(pops < 0):
            raise ValueError("risks and populations must be nonnegative")
        object.__setattr__(self, "true_labels", labels)
        object.__setattr__(self, "true_risks", risks)
        object.__setattr__(self, "populations", pops)

    @property
    def n_classes(self) -> int:
        return self.true_risks.size


def _grow_blobs(graph: SpatialGraph, n_classes: int, n_seeds_per_class: int,
                rng: np.random.Generator) -> np.ndarray:
    """Partition nodes into contiguous class regions of balanced size.

    Seeds are interleaved over classes; regions then grow one node at a
    time, always extending the currently smallest class, so final sizes
    stay within a few nodes of each other.  A boxed-in class is reseeded at
    a random unclaimed node, which starts a new (still contiguous) blob.
    """
    n = graph.node_count
    labels = np.full(n, -1, dtype=np.int64)
    n_seeds = min(n_classes * n_seeds_per_class, n)
    seed_nodes = rng.choice(n, size=n_seeds, replace=False)
    frontiers = [deque() for _ in range(n_classes)]
    sizes = np.zeros(n_classes, dtype=np.int64)
    for s, node in enumerate(seed_nodes):
        c = s % n_classes
        labels[node] = c
        sizes[c] += 1
        frontiers[c].append(int(node))

    remaining = n - n_seeds
    while remaining > 0:
        grew = False
        for c in np.argsort(sizes, kind="stable"):
            frontier = frontiers[c]
            while frontier:
                node = frontier[0]
                open_nbrs = [int(j) for j in graph.neighbors(node) if labels[j] < 0]
                if not open_nbrs:
                    frontier.popleft()
                    continue
                pick = open_nbrs[rng.integers(len(open_nbrs))]
                labels[pick] = c
                sizes[c] += 1
                frontier.append(pick)
                remaining -= 1
                grew = True
                break
            if grew:
                break
        if not grew:
            # every frontier is dead; restart the smallest class elsewhere
            c = int(np.argmin(sizes))
            unclaimed = np.flatnonzero(labels < 0)
            node = int(unclaimed[rng.integers(unclaimed.size)])
            labels[node] = c
            sizes[c] += 1
            frontiers[c].append(node)
            remaining -= 1
    return labels


def make_blob_scenario(graph: SpatialGraph, n_classes: int, risks,
                       pop_range: tuple[int, int] = (1, 32039),
                       n_seeds_per_class: int = 2,
                       rng: np.random.Generator | None = None) -> Scenario:
    """Contiguous-region scenario with log-uniform population sizes."""
    if rng is None:
        rng = np.random.default_rng()
    risks = np.asarray(risks, dtype=np.float64)
    if risks.size != n_classes:
        raise ValueError("risks length must equal n_classes")
    lo, hi = pop_range
    if lo < 1 or hi < lo:
        raise ValueError("need 1 <= lo <= hi for the population range")
    labels = _grow_blobs(graph, n_classes, n_seeds_per_class, rng)
    pops = np.rint(np.exp(rng.uniform(np.log(lo), np.log(hi), size=graph.node_count)))
    pops = np.clip(pops, lo, hi).astype(np.int64)
    return Scenario(graph=graph, true_labels=labels, true_risks=risks,
                    populations=pops)


def permute_risks(scenario: Scenario, perm) -> Scenario:
    """Reindex the risk levels; the class map itself is untouched.

    ``perm[k]`` names the old risk that class ``k`` now carries, so extreme
    levels can be placed in adjacent regions.
    """
    perm = np.asarray(perm, dtype=np.int64)
    k = scenario.n_classes
    if sorted(perm.tolist()) != list(range(k)):
        raise ValueError("perm must be a permutation of 0..K-1")
    return replace(scenario, true_risks=scenario.true_risks[perm])


def sample_counts(scenario: Scenario, rng: np.random.Generator | None = None) -> ObservedData:
    """Draw per-node counts: Poisson with rate population times class risk."""
    if rng is None:
        rng = np.random.default_rng()
    rates = scenario.populations * scenario.true_risks[scenario.true_labels]
    counts = rng.poisson(rates)
    return ObservedData(counts=counts, populations=scenario.populations)
