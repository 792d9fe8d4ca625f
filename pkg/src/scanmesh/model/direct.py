"""Ablation: classify every vertex triple as a face without the dual graph."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from ..autodiff import MLP, Module, Tensor, ops
from ..mesh.distance import point_mesh_distance
from ..mesh.faceset import IndexedFaceSet

ORDERINGS = tuple(itertools.permutations(range(3)))


@lru_cache(maxsize=16)
def all_triples(n: int) -> np.ndarray:
    """(C(n,3), 3) index triples i < j < k in lexicographic order."""
    return np.array(list(itertools.combinations(range(n), 3)), dtype=np.int64).reshape(-1, 3)


@lru_cache(maxsize=16)
def _triple_incidence(n: int) -> np.ndarray:
    t = all_triples(n)
    width = (n - 1) * (n - 2) // 2
    table = np.full((n, width), -1, dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for row, tri in enumerate(t):
        for v in tri:
            table[v, fill[v]] = row
            fill[v] += 1
    return table


def triple_labels(n: int, faces: np.ndarray) -> np.ndarray:
    """Direct(GT) targets: 1 for triples that are faces (as vertex sets)."""
    t = all_triples(n)
    key = (t[:, 0] * n + t[:, 1]) * n + t[:, 2]
    f = np.sort(np.asarray(faces, dtype=np.int64).reshape(-1, 3), axis=1)
    fkey = (f[:, 0] * n + f[:, 1]) * n + f[:, 2]
    return np.isin(key, fkey).astype(np.int64)


def surface_triple_labels(positions: np.ndarray, target: IndexedFaceSet, threshold: float) -> np.ndarray:
    """Direct(Surf) targets: 1 for triples whose three vertices all lie within
    ``threshold`` of the target surface."""
    near = point_mesh_distance(positions, target) <= threshold
    t = all_triples(len(positions))
    return near[t].all(axis=1).astype(np.int64)


class DirectFaceNet(Module):
    """Triple features ``g_f([h_i, h_j, h_k])`` averaged over the 6 orderings,
    node update ``g_v`` of the sum over incident triples, then a triple head."""

    def __init__(self, node_dim: int, rng: np.random.Generator, dim: int = 64, hidden: int = 64,
                 dropout: float = 0.5, max_vertices: int = 40, dtype=np.float32):
        self.g_f = MLP(3 * node_dim, hidden, dim, rng, dropout, dtype=dtype)
        self.g_v = MLP(dim, hidden, node_dim, rng, dropout, dtype=dtype)
        self.head = MLP(3 * node_dim, hidden, 2, rng, dropout, head=True, dtype=dtype)
        self.max_vertices = max_vertices

    def _triple_map(self, h: Tensor, mlp: MLP) -> Tensor:
        """(n, d) nodes -> (T, out): ``mlp`` of the concatenated corners,
        averaged over all orderings of each triple."""
        t = all_triples(h.shape[0])
        rows = np.concatenate([t[:, list(o)] for o in ORDERINGS])  # (6T, 3)
        x = ops.concat([ops.gather_rows(h, rows[:, k]) for k in range(3)], axis=-1)
        y = mlp(x)
        y = ops.reshape(y, (len(ORDERINGS), len(t), y.shape[-1]))
        return ops.mul(ops.set_sum(y, axis=0), 1.0 / len(ORDERINGS))

    def forward(self, h: Tensor) -> Tensor:
        """Node features (B, n, d) -> (B, C(n,3), 2) triple logits."""
        b, n, d = h.shape
        if n > self.max_vertices:
            raise ValueError(f"direct face network limited to n <= {self.max_vertices} (got {n})")
        out = []
        for s in range(b):
            hs = ops.index(h, s)
            t = self._triple_map(hs, self.g_f)
            agg = ops.neighbor_set_sum(t, _triple_incidence(n))
            hs = ops.add(hs, self.g_v(agg))
            out.append(ops.reshape(self._triple_map(hs, self.head), (1, -1, 2)))
        return ops.concat(out, axis=0)
