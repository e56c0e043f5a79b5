"""Dependency-free SVG choropleths of classified maps.

Lattice graphs built by :func:`riskmap.graph.build_hex_lattice` carry
``r<row>c<col>`` node ids and are drawn as true hexagon tilings; any other
graph falls back to an abstract spectral layout with one dot per node.
Class colors come from a fixed light-to-dark palette keyed to ascending
risk, so the darkest color is always the highest risk class.
"""

from __future__ import annotations

import math

import numpy as np

from .graph import HEX_ID_PATTERN, SpatialGraph

# Light-to-dark sequential palette; class k of K samples it evenly.
PALETTE = ["#ffffcc", "#ffeda0", "#fed976", "#feb24c", "#fd8d3c",
           "#fc4e2a", "#e31a1c", "#bd0026", "#800026"]


def class_colors(n_classes: int) -> list[str]:
    if n_classes == 1:
        return [PALETTE[len(PALETTE) // 2]]
    idx = np.round(np.linspace(0, len(PALETTE) - 1, n_classes)).astype(int)
    return [PALETTE[i] for i in idx]


def _hex_positions(graph: SpatialGraph) -> np.ndarray | None:
    """Recover odd-r lattice centers from the node-id pattern, if present."""
    if graph.node_ids is None:
        return None
    coords = []
    for nid in graph.node_ids:
        m = HEX_ID_PATTERN.match(nid)
        if m is None:
            return None
        coords.append((int(m.group(1)), int(m.group(2))))
    size = 10.0
    pos = np.empty((graph.node_count, 2))
    for i, (r, c) in enumerate(coords):
        pos[i, 0] = size * math.sqrt(3.0) * (c + 0.5 * (r % 2))
        pos[i, 1] = size * 1.5 * r
    return pos


def _spectral_positions(graph: SpatialGraph) -> np.ndarray:
    """Abstract 2-d layout from the two lowest nontrivial Laplacian modes."""
    n = graph.node_count
    if n == 1:
        return np.zeros((1, 2))
    adj = graph.neighbor_matrix.toarray()
    lap = np.diag(adj.sum(axis=1)) - adj
    _, vecs = np.linalg.eigh(lap)
    pos = vecs[:, 1:3] if n >= 3 else np.column_stack([vecs[:, 1], np.zeros(n)])
    span = pos.max(axis=0) - pos.min(axis=0)
    span[span == 0] = 1.0
    return 400.0 * (pos - pos.min(axis=0)) / span


def _hexagon_points(cx: float, cy: float, size: float) -> str:
    pts = []
    for corner in range(6):
        ang = math.pi / 180.0 * (60.0 * corner - 30.0)
        pts.append(f"{cx + size * math.cos(ang):.2f},{cy + size * math.sin(ang):.2f}")
    return " ".join(pts)


def render_map_svg(graph: SpatialGraph, labels: np.ndarray, n_classes: int,
                   title: str = "") -> str:
    """Build the SVG document for a classified map, as a string."""
    labels = np.asarray(labels)
    if labels.shape != (graph.node_count,):
        raise ValueError("labels length must match the graph")
    colors = class_colors(n_classes)
    hex_pos = _hex_positions(graph)
    pos = hex_pos if hex_pos is not None else _spectral_positions(graph)

    margin = 25.0
    mins = pos.min(axis=0)
    pos = pos - mins + margin
    width = float(pos[:, 0].max() + margin)
    height = float(pos[:, 1].max() + margin + (20 if title else 0))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{margin}" y="16" font-family="sans-serif" '
                     f'font-size="12">{title}</text>')
        pos = pos + np.array([0.0, 20.0])
    if hex_pos is not None:
        for i in range(graph.node_count):
            color = colors[int(labels[i])]
            parts.append(f'<polygon points="{_hexagon_points(pos[i, 0], pos[i, 1], 10.0)}" '
                         f'fill="{color}" stroke="#555555" stroke-width="0.4"/>')
    else:
        for a, b in graph.edges():
            parts.append(f'<line x1="{pos[a, 0]:.2f}" y1="{pos[a, 1]:.2f}" '
                         f'x2="{pos[b, 0]:.2f}" y2="{pos[b, 1]:.2f}" '
                         f'stroke="#cccccc" stroke-width="0.5"/>')
        for i in range(graph.node_count):
            color = colors[int(labels[i])]
            parts.append(f'<circle cx="{pos[i, 0]:.2f}" cy="{pos[i, 1]:.2f}" r="4" '
                         f'fill="{color}" stroke="#555555" stroke-width="0.4"/>')
    parts.append("</svg>")
    return "\n".join(parts)
