"""One-to-one vertex association: the Hungarian method and the greedy baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Assignment:
    """Injective matching ``rows[k] -> cols[k]`` of size min(n, m), sorted by row."""

    rows: np.ndarray
    cols: np.ndarray
    total_cost: float
    shape: tuple[int, int]

    @property
    def mapping(self) -> dict[int, int]:
        return dict(zip(self.rows.tolist(), self.cols.tolist()))

    def target_of(self) -> np.ndarray:
        """(n,) matched column per row, -1 where unmatched."""
        out = np.full(self.shape[0], -1, dtype=np.int64)
        out[self.rows] = self.cols
        return out

    def __len__(self) -> int:
        return len(self.rows)


def _check(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"cost must be a matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    return c


def _finish(cost: np.ndarray, rows, cols) -> Assignment:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    order = np.argsort(rows, kind="stable")
    rows, cols = rows[order], cols[order]
    total = float(cost[rows, cols].sum()) if len(rows) else 0.0
    return Assignment(rows, cols, total, cost.shape)


def _shortest_augmenting_path(cost: np.ndarray) -> np.ndarray:
    """Row -> column for an n x m cost with n <= m (O(n^2 m)).

    Rows are inserted one at a time; each insertion grows a Dijkstra-like
    tree over columns using reduced costs kept non-negative by the dual
    potentials ``u`` (rows) and ``v`` (columns), then flips the alternating
    path to the first free column reached. Among equally short frontier
    columns the lowest index is taken.
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=np.int64)  # 1-based row owning each column; column 0 is the root
    way = np.zeros(m + 1, dtype=np.int64)
    c = np.zeros((n + 1, m + 1))
    c[1:, 1:] = cost
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            free[0] = False
            cur = c[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    match = np.full(n, -1, dtype=np.int64)
    cols = np.nonzero(owner[1:])[0]
    match[owner[1:][cols] - 1] = cols
    return match


def hungarian(cost) -> Assignment:
    """Minimum-total-cost injective matching of size min(n, m).

    Rectangular inputs are handled by matching the shorter side into the
    longer one. An empty matrix gives an empty assignment.
    """
    c = _check(cost)
    n, m = c.shape
    if n == 0 or m == 0:
        return _finish(c, [], [])
    if n <= m:
        match = _shortest_augmenting_path(c)
        return _finish(c, np.arange(n), match)
    match = _shortest_augmenting_path(c.T)
    return _finish(c, match, np.arange(m))


def greedy_match(cost) -> Assignment:
    """Repeatedly take the cheapest pair whose row and column are both unused.

    Equal costs are taken in order of lowest row, then lowest column.
    """
    c = _check(cost)
    n, m = c.shape
    k = min(n, m)
    if k == 0:
        return _finish(c, [], [])
    flat = np.lexsort((np.tile(np.arange(m), n), np.repeat(np.arange(n), m), c.ravel()))
    row_used = np.zeros(n, dtype=bool)
    col_used = np.zeros(m, dtype=bool)
    rows, cols = [], []
    for idx in flat:
        i, j = divmod(int(idx), m)
        if row_used[i] or col_used[j]:
            continue
        row_used[i] = col_used[j] = True
        rows.append(i)
        cols.append(j)
        if len(rows) == k:
            break
    return _finish(c, rows, cols)


def vertex_cost_matrix(pred, target) -> np.ndarray:
    """(n, m) L1 distances between predicted and target positions."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    t = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    return np.abs(p[:, None, :] - t[None, :, :]).sum(axis=-1)


MATCHERS = {"hungarian": hungarian, "greedy": greedy_match}
