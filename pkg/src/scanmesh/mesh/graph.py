"""Vertex-edge graphs and their triangle dual graphs."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .faceset import IndexedFaceSet

EDGE_THRESHOLD = 0.5
DEGENERATE_RADIUS = 1e3
_DEGENERATE_REL = 1e-12


def face_features(tri) -> tuple[np.ndarray, bool]:
    """8-dim descriptor of a triangle: centroid, unit normal, area, circumradius.

    The normal follows the winding obtained by rotating the corners so the
    lexicographically smallest position comes first. Collinear corners give
    a zero normal, the radius cap, and ``degenerate=True``.
    """
    p = np.asarray(tri, dtype=np.float64).reshape(3, 3)
    first = min(range(3), key=lambda k: tuple(p[k]))
    p = np.roll(p, -first, axis=0)
    feats, degen = _features(p[None, 0], p[None, 1], p[None, 2])
    return feats[0], bool(degen[0])


def _features(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cross = np.cross(b - a, c - a)
    cn = np.linalg.norm(cross, axis=1)
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(c - a, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    scale = np.maximum(np.maximum(la, lb), lc)
    degen = cn <= _DEGENERATE_REL * np.maximum(scale ** 2, 1e-300)
    area = 0.5 * cn
    safe = np.where(degen, 1.0, cn)
    normal = np.where(degen[:, None], 0.0, cross / safe[:, None])
    radius = np.where(degen, DEGENERATE_RADIUS, la * lb * lc / (4 * np.where(degen, 1.0, area)))
    radius = np.minimum(radius, DEGENERATE_RADIUS)
    centroid = (a + b + c) / 3
    return np.concatenate([centroid, normal, area[:, None], radius[:, None]], axis=1), degen


def triangle_features(positions: np.ndarray, triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Features for index triples; corners are ordered lexicographically by position.

    Ordering by position rather than by index makes the descriptor independent
    of vertex labelling.
    """
    if len(triangles) == 0:
        return np.zeros((0, 8)), np.zeros(0, dtype=bool)
    pts = positions[triangles]  # (F, 3, 3)
    order = np.lexsort((pts[:, :, 2], pts[:, :, 1], pts[:, :, 0]), axis=1)
    pts = np.take_along_axis(pts, order[:, :, None], axis=1)
    return _features(pts[:, 0], pts[:, 1], pts[:, 2])


@dataclass
class VertexEdgeGraph:
    """Vertex positions plus a symmetric edge-probability matrix with zero diagonal."""

    positions: np.ndarray
    edge_prob: np.ndarray
    threshold: float = EDGE_THRESHOLD

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        p = np.asarray(self.edge_prob, dtype=np.float64)
        n = len(self.positions)
        if p.shape != (n, n):
            raise ValueError(f"edge_prob shape {p.shape} != ({n}, {n})")
        if not np.array_equal(p, p.T) or np.any(np.diag(p) != 0):
            raise ValueError("edge_prob must be symmetric with zero diagonal")
        self.edge_prob = p

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def adjacency(self) -> np.ndarray:
        return self.edge_prob > self.threshold

    @property
    def edge_set(self) -> np.ndarray:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return np.stack([i, j], axis=1)

    @classmethod
    def from_edges(cls, positions, edges, n: int | None = None) -> "VertexEdgeGraph":
        positions = np.asarray(positions, dtype=np.float64)
        n = len(positions) if n is None else n
        prob = np.zeros((n, n))
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        prob[e[:, 0], e[:, 1]] = 1.0
        prob[e[:, 1], e[:, 0]] = 1.0
        return cls(positions, prob)

    @classmethod
    def from_mesh(cls, mesh: IndexedFaceSet) -> "VertexEdgeGraph":
        return cls.from_edges(mesh.vertices, mesh.edges())

    def dump(self) -> str:
        """Adjacency list text: ``i: j k ...`` per vertex."""
        adj = self.adjacency
        return "".join(f"{i}: {' '.join(map(str, np.nonzero(adj[i])[0]))}\n" for i in range(self.n))


@dataclass
class DualGraph:
    """Candidate triangles (3-cycles of an edge set) and their shared-edge adjacency.

    ``triangles`` rows are vertex index triples with i < j < k; ``adjacency``
    rows are dual-node pairs (a, b) with a < b.
    """

    triangles: np.ndarray
    features: np.ndarray
    degenerate: np.ndarray
    adjacency: np.ndarray
    _nbr: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.triangles)

    def neighbor_table(self) -> np.ndarray:
        """(F, max_degree) dual neighbors padded with -1."""
        if self._nbr is None:
            nbrs: list[list[int]] = [[] for _ in range(self.n_nodes)]
            for a, b in self.adjacency:
                nbrs[a].append(b)
                nbrs[b].append(a)
            width = max((len(x) for x in nbrs), default=0)
            table = np.full((self.n_nodes, width), -1, dtype=np.int64)
            for i, x in enumerate(nbrs):
                table[i, :len(x)] = x
            self._nbr = table
        return self._nbr

    def dump(self) -> str:
        lines = [f"{k}: tri {a} {b} {c} | {' '.join(map(str, row[row >= 0]))}"
                 for k, ((a, b, c), row) in enumerate(zip(self.triangles, self.neighbor_table()))]
        return "\n".join(lines) + ("\n" if lines else "")


def enumerate_triangles(adj: np.ndarray) -> np.ndarray:
    """All 3-cycles of a boolean adjacency matrix as sorted index triples."""
    adj = np.asarray(adj, dtype=bool)
    upper = np.triu(adj, 1)
    tris = []
    for i, j in zip(*np.nonzero(upper)):
        common = np.nonzero(upper[i] & upper[j])[0]
        for k in common:
            tris.append((i, j, k))
    return np.array(tris, dtype=np.int64).reshape(-1, 3)


def dual_adjacency(triangles: np.ndarray) -> np.ndarray:
    by_edge: dict[tuple[int, int], list[int]] = defaultdict(list)
    for t, (a, b, c) in enumerate(triangles):
        for e in ((a, b), (b, c), (a, c)):
            by_edge[e].append(t)
    pairs = set()
    for members in by_edge.values():
        for x in range(len(members)):
            for y in range(x + 1, len(members)):
                pairs.add((members[x], members[y]))
    return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)


def build_dual_graph(g: VertexEdgeGraph) -> DualGraph:
    triangles = enumerate_triangles(g.adjacency)
    feats, degen = triangle_features(g.positions, triangles)
    return DualGraph(triangles, feats, degen, dual_adjacency(triangles))


def face_labels(triangles: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """1 for candidate triangles that appear (as a vertex set) in ``faces``."""
    target = {tuple(sorted(f)) for f in np.asarray(faces).tolist()}
    return np.array([tuple(t) in target for t in np.asarray(triangles).tolist()], dtype=np.int64)
