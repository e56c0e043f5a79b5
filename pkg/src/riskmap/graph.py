"""Spatial neighborhood graphs over geographical units.

A :class:`SpatialGraph` is the undirected contiguity structure the Markov
prior lives on: nodes are areal units, edges join units that touch.  Graphs
are immutable after construction and validated for symmetry, absence of
self-loops, and index range, so downstream code never re-checks.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


class SelfLoopError(ValueError):
    """An edge joins a unit to itself."""

    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"self-loop on node {node_id!r}")


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected neighborhood structure over ``node_count`` units.

    Adjacency is stored in CSR form: ``indices[indptr[i]:indptr[i+1]]`` are
    the (sorted) neighbors of node ``i``.  ``node_ids`` optionally carries
    external string identifiers in node order.
    """

    node_count: int
    indptr: np.ndarray
    indices: np.ndarray
    node_ids: tuple[str, ...] | None = None
    neighbor_matrix: sparse.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.node_count
        if n < 1:
            raise ValueError("graph needs at least one node")
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != indices.size:
            raise ValueError("malformed CSR index arrays")
        if indices.size and (indices.min() < 0 or indices.max() >= n):
            raise ValueError("neighbor index out of range")
        if self.node_ids is not None and len(self.node_ids) != n:
            raise ValueError("node_ids length must equal node_count")
        # Symmetry and no-self-loop check via the sparse pattern.
        data = np.ones(indices.size, dtype=np.int8)
        mat = sparse.csr_matrix((data, indices, indptr), shape=(n, n))
        if mat.diagonal().any():
            bad = int(np.flatnonzero(mat.diagonal())[0])
            raise SelfLoopError(self._id_of(bad))
        if (mat != mat.T).nnz != 0:
            raise ValueError("adjacency is not symmetric")
        indptr.flags.writeable = False
        indices.flags.writeable = False
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "neighbor_matrix", mat.astype(np.float64))

    def _id_of(self, i: int) -> str:
        return self.node_ids[i] if self.node_ids is not None else str(i)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def edge_count(self) -> int:
        return self.indices.size // 2

    def edges(self) -> np.ndarray:
        """Unordered edge pairs (a, b) with a < b, each edge once."""
        src = np.repeat(np.arange(self.node_count), self.degrees)
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])


def from_adjacency(adjacency: list[list[int]],
                   node_ids: tuple[str, ...] | None = None) -> SpatialGraph:
    """Build a graph from per-node neighbor lists (validated, sorted)."""
    n = len(adjacency)
    sorted_adj = [np.sort(np.asarray(a, dtype=np.int64)) for a in adjacency]
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([a.size for a in sorted_adj])
    indices = (np.concatenate(sorted_adj) if n and indptr[-1] > 0
               else np.zeros(0, dtype=np.int64))
    return SpatialGraph(n, indptr, indices, node_ids)


# Node ids produced by build_hex_lattice; the SVG renderer recognizes this
# pattern to recover the lattice geometry from an edge-list round trip.
HEX_ID_PATTERN = re.compile(r"^r(\d+)c(\d+)$")


def hex_node_id(row: int, col: int) -> str:
    return f"r{row}c{col}"


def _hex_neighbor_offsets(row: int) -> list[tuple[int, int]]:
    # "odd-r" offset convention: odd rows are shifted half a cell right.
    if row % 2 == 0:
        return [(0, -1), (0, 1), (-1, -1), (-1, 0), (1, -1), (1, 0)]
    return [(0, -1), (0, 1), (-1, 0), (-1, 1), (1, 0), (1, 1)]


def build_hex_lattice(rows: int, cols: int) -> SpatialGraph:
    """Hexagonal lattice of ``rows x cols`` cells, row-major node order.

    Uses the "odd-r" offset convention.  Interior cells (at least one ring
    away from the border) have exactly 6 neighbors; the closed-form edge
    count is ``rows*(cols-1) + (rows-1)*(2*cols-1)``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    adjacency: list[list[int]] = []
    ids = []
    for r in range(rows):
        for c in range(cols):
            ids.append(hex_node_id(r, c))
            nbrs = []
            for dr, dc in _hex_neighbor_offsets(r):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    nbrs.append(rr * cols + cc)
            adjacency.append(nbrs)
    return from_adjacency(adjacency, tuple(ids))


def load_edge_list(rows: list[tuple[str, str]],
                   node_ids: list[str] | None = None) -> SpatialGraph:
    """Graph from (id_a, id_b) string pairs.

    Nodes are indexed in first-appearance order unless ``node_ids`` pins the
    universe (and order) explicitly; duplicate edges collapse; symmetry is
    implied.  Raises :class:`SelfLoopError` for a pair joining an id to
    itself and ``KeyError`` for an edge id outside a pinned universe — rows
    are never silently dropped.
    """
    index: dict[str, int] = {}
    if node_ids is not None:
        for nid in node_ids:
            if nid in index:
                raise ValueError(f"duplicate node id {nid!r}")
            index[nid] = len(index)
    pairs: set[tuple[int, int]] = set()
    for id_a, id_b in rows:
        if id_a == id_b:
            raise SelfLoopError(id_a)
        for nid in (id_a, id_b):
            if nid not in index:
                if node_ids is not None:
                    raise KeyError(f"edge references unknown node id {nid!r}")
                index[nid] = len(index)
        a, b = index[id_a], index[id_b]
        pairs.add((min(a, b), max(a, b)))
    n = len(index)
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for a, b in pairs:
        adjacency[a].append(b)
        adjacency[b].append(a)
    return from_adjacency(adjacency, tuple(index))


def read_edge_csv(path, node_ids: list[str] | None = None) -> SpatialGraph:
    """Load a two-column ``id_a,id_b`` CSV (UTF-8, header optional)."""
    rows: list[tuple[str, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) < 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            a, b = rec[0].strip(), rec[1].strip()
            if lineno == 1 and (a.lower(), b.lower()) == ("id_a", "id_b"):
                continue
            rows.append((a, b))
    return load_edge_list(rows, node_ids=node_ids)
