"""Message passing over the fully connected graph of predicted vertices."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..autodiff import MLP, Module, Tensor, ops

PairFn = Callable[[Tensor, np.ndarray], Tensor]


def pair_features(h: Tensor) -> Tensor:
    """(B, n, d) node features -> (B, n, n, 2d) with row (i, j) = [h_i, h_j]."""
    b, n, d = h.shape
    hi = ops.broadcast_to(ops.reshape(h, (b, n, 1, d)), (b, n, n, d))
    hj = ops.broadcast_to(ops.reshape(h, (b, 1, n, d)), (b, n, n, d))
    return ops.concat([hi, hj], axis=-1)


def off_diagonal(b: int, n: int) -> np.ndarray:
    """(B, n, n) boolean mask of ordered pairs i != j."""
    return np.broadcast_to(~np.eye(n, dtype=bool), (b, n, n))


def edge_update(h: Tensor, f_e: PairFn) -> Tensor:
    """Every ordered pair gets ``f_e([h_i, h_j])``; returns (B, n, n, d_e)."""
    b, n, d = h.shape
    pairs = ops.reshape(pair_features(h), (b * n * n, 2 * d))
    e = f_e(pairs, off_diagonal(b, n).reshape(-1))
    return ops.reshape(e, (b, n, n, e.shape[-1]))


def node_update(e: Tensor, f_v: PairFn) -> Tensor:
    """Each node gets ``f_v`` of the unordered sum over its incident edges.

    Both directions of a pair are incident, so node i sums
    ``e_ij + e_ji`` over all j != i. Self-pairs are excluded.
    """
    b, n, _, d = e.shape
    both = ops.add(e, ops.transpose(e, (0, 2, 1, 3)))
    mask = off_diagonal(b, n)[..., None].astype(e.dtype)
    agg = ops.set_sum(ops.mul(both, mask), axis=2)
    h = f_v(ops.reshape(agg, (b * n, d)), None)
    return ops.reshape(h, (b, n, h.shape[-1]))


def message_pass(h: Tensor, edge_fns: list[PairFn], node_fns: list[PairFn]) -> tuple[Tensor, Tensor]:
    """Alternate edge and node updates, one pair of functions per round.

    Returns the final node features and the last round's edge features.
    """
    e = None
    for f_e, f_v in zip(edge_fns, node_fns):
        e = edge_update(h, f_e)
        h = node_update(e, f_v)
    return h, e


def symmetrize_pairs(logits: Tensor) -> Tensor:
    """Average the (i, j) and (j, i) entries of (B, n, n, C) logits."""
    return ops.mul(ops.add(logits, ops.transpose(logits, (0, 2, 1, 3))), 0.5)


def edge_probabilities(logits: Tensor | np.ndarray) -> np.ndarray:
    """Softmax probability of class 1 per pair, with a zero diagonal."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    z = z.astype(np.float64)
    p = 1.0 / (1.0 + np.exp(z[..., 0] - z[..., 1]))
    n = p.shape[-1]
    p[..., np.arange(n), np.arange(n)] = 0.0
    return p


def _call(mlp: MLP) -> PairFn:
    return lambda x, mask: mlp(x, mask)


class VertexEdgeNet(Module):
    """Node features from positions and scan features, then ``rounds`` of
    edge/node message passing and a per-pair 2-class edge head."""

    def __init__(self, f2_channels: int, rng: np.random.Generator, node_dim: int = 64,
                 edge_dim: int = 64, hidden: int = 64, rounds: int = 3, dropout: float = 0.5,
                 dtype=np.float32):
        half = node_dim // 2
        self.embed_pos = MLP(3, hidden, half, rng, dropout, dtype=dtype)
        self.embed_f2 = MLP(f2_channels, hidden, half, rng, dropout, dtype=dtype)
        self.f_e = [MLP(2 * node_dim, hidden, edge_dim, rng, dropout, dtype=dtype) for _ in range(rounds)]
        self.f_v = [MLP(edge_dim, hidden, node_dim, rng, dropout, dtype=dtype) for _ in range(rounds)]
        self.edge_head = MLP(2 * node_dim, hidden, 2, rng, dropout, head=True, dtype=dtype)

    def embed(self, positions: Tensor, f2_rows: Tensor) -> Tensor:
        """(B, n, 3) positions and (B*n, C) scan features -> (B, n, node_dim)."""
        b, n, _ = positions.shape
        p = self.embed_pos(ops.reshape(positions, (b * n, 3)))
        s = self.embed_f2(f2_rows)
        return ops.reshape(ops.concat([p, s], axis=-1), (b, n, -1))

    def forward(self, positions: Tensor, f2_rows: Tensor) -> tuple[Tensor, Tensor]:
        """Returns symmetrized edge logits (B, n, n, 2) and final node features."""
        h = self.embed(positions, f2_rows)
        h, _ = message_pass(h, [_call(m) for m in self.f_e], [_call(m) for m in self.f_v])
        logits = edge_update(h, _call(self.edge_head))
        return symmetrize_pairs(logits), h
