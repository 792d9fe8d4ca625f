"""Face classification by message passing over dual graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import MLP, Module, Tensor, ops
from ..mesh.graph import DualGraph
from .encoder import f2_cells, lookup_f2_rows

N_FACE_FEATURES = 8


@dataclass
class DualBatch:
    """Several dual graphs stacked into one block-diagonal graph.

    ``offsets[b]:offsets[b+1]`` are the node rows of sample b. ``src``/``dst``
    list every dual edge in both directions; ``incident`` is the (F, w)
    table of directed-edge rows touching each node, padded with -1.
    """

    features: np.ndarray
    sample: np.ndarray
    offsets: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    incident: np.ndarray
    cells: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.features)

    def split(self, values: np.ndarray) -> list[np.ndarray]:
        return [values[self.offsets[b]:self.offsets[b + 1]] for b in range(len(self.offsets) - 1)]


def _incidence(n: int, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    ends = np.concatenate([src, dst])
    rows = np.concatenate([np.arange(len(src)), np.arange(len(src))])
    order = np.argsort(ends, kind="stable")
    ends, rows = ends[order], rows[order]
    counts = np.bincount(ends, minlength=n)
    width = int(counts.max()) if n and len(src) else 0
    table = np.full((n, width), -1, dtype=np.int64)
    if width:
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        slot = np.arange(len(ends)) - start[ends]
        table[ends, slot] = rows
    return table


def batch_duals(duals: list[DualGraph], scale=None, offset=None) -> DualBatch:
    """Stack duals; with grid transforms, also locate each centroid's f2 cell."""
    counts = np.array([d.n_nodes for d in duals], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    feats = np.concatenate([d.features for d in duals] or [np.zeros((0, 8))]).reshape(-1, 8)
    sample = np.repeat(np.arange(len(duals)), counts)
    src, dst = [], []
    for b, d in enumerate(duals):
        if len(d.adjacency):
            a = d.adjacency + offsets[b]
            src += [a[:, 0], a[:, 1]]
            dst += [a[:, 1], a[:, 0]]
    src = np.concatenate(src).astype(np.int64) if src else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dst).astype(np.int64) if dst else np.zeros(0, dtype=np.int64)
    cells = None
    if scale is not None:
        # centroids go to grid space with their own sample's transform
        scale = np.asarray(scale, dtype=np.float64)
        offset = np.asarray(offset, dtype=np.float64)
        g = feats[:, :3] * scale[sample][:, None] + offset[sample]
        cells = f2_cells(g[None], np.ones(1), np.zeros((1, 3)))[0]
    return DualBatch(feats, sample, offsets, src, dst, _incidence(len(feats), src, dst), cells)


class FaceNet(Module):
    """Embeds each candidate face's 8-dim descriptor (plus, optionally, the scan
    feature at its centroid), runs residual message passing over the dual
    edges, and classifies every node as face / not face."""

    def __init__(self, f2_channels: int, rng: np.random.Generator, dim: int = 64, hidden: int = 64,
                 rounds: int = 3, dropout: float = 0.5, use_f2: bool = True,
                 radius_clip: float = 2.0, dtype=np.float32):
        self.use_f2 = use_f2
        self.radius_clip = radius_clip
        n_in = N_FACE_FEATURES + (f2_channels if use_f2 else 0)
        self.embed = MLP(n_in, hidden, dim, rng, dropout, dtype=dtype)
        self.f_e = [MLP(2 * dim, hidden, dim, rng, dropout, dtype=dtype) for _ in range(rounds)]
        self.f_v = [MLP(dim, hidden, dim, rng, dropout, dtype=dtype) for _ in range(rounds)]
        self.head = MLP(dim, hidden, 2, rng, dropout, head=True, dtype=dtype)
        self.dtype = dtype

    def inputs(self, batch: DualBatch, f2: Tensor | None) -> Tensor:
        x = batch.features.copy()
        x[:, 7] = np.minimum(x[:, 7], self.radius_clip)
        x = Tensor(x.astype(self.dtype))
        if self.use_f2:
            if f2 is None or batch.cells is None:
                raise ValueError("FaceNet with use_f2 needs f2 features and centroid cells")
            x = ops.concat([x, lookup_f2_rows(f2, batch.sample, batch.cells)], axis=-1)
        return x

    def forward(self, batch: DualBatch, f2: Tensor | None = None) -> Tensor:
        """(F, 2) logits over every candidate face in the batch."""
        if batch.n_nodes == 0:
            return Tensor(np.zeros((0, 2), dtype=self.dtype))
        h = self.embed(self.inputs(batch, f2))
        for f_e, f_v in zip(self.f_e, self.f_v):
            if len(batch.src):
                pairs = ops.concat([ops.gather_rows(h, batch.src), ops.gather_rows(h, batch.dst)], axis=-1)
                e = f_e(pairs)
                agg = ops.neighbor_set_sum(e, batch.incident)
            else:
                agg = Tensor(np.zeros(h.shape, dtype=h.dtype))
            h = ops.add(h, f_v(agg))
        return self.head(h)


def face_probabilities(logits: Tensor | np.ndarray) -> np.ndarray:
    z = (logits.data if isinstance(logits, Tensor) else np.asarray(logits)).astype(np.float64)
    return 1.0 / (1.0 + np.exp(z[:, 0] - z[:, 1]))
