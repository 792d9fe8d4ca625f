from __future__ import annotations

import numpy as np

from .faceset import IndexedFaceSet


def closest_barycentric(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Barycentric weights (N, 3) of the closest point to each ``p`` on triangle (a, b, c).

    Region classification after Ericson, Real-Time Collision Detection 5.1.5.
    Degenerate triangles fall back to their nearest corner.
    """
    ab, ac, ap = b - a, c - a, p - a
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = p - b
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = p - c
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty((len(p), 3))
    done = np.zeros(len(p), dtype=bool)

    def put(mask, u, v, w):
        nonlocal done
        m = mask & ~done
        out[m] = np.stack([u, v, w], axis=-1)[m]
        done |= m

    one = np.ones(len(p))
    zero = np.zeros(len(p))
    put((d1 <= 0) & (d2 <= 0), one, zero, zero)
    put((d3 >= 0) & (d4 <= d3), zero, one, zero)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), 1 - v_ab, v_ab, zero)
        put((d6 >= 0) & (d5 <= d6), zero, zero, one)
        w_ac = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), 1 - w_ac, zero, w_ac)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), zero, 1 - w_bc, w_bc)
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        put(np.ones(len(p), dtype=bool), 1 - v - w, v, w)
    bad = ~np.isfinite(out).all(axis=1)
    if bad.any():
        corners = np.stack([a[bad], b[bad], c[bad]], axis=1)
        k = ((corners - p[bad][:, None]) ** 2).sum(-1).argmin(axis=1)
        out[bad] = np.eye(3)[k]
    return out


def closest_point_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest point to each ``p`` on the matching triangle (a, b, c); all (N, 3)."""
    w = closest_barycentric(p, a, b, c)
    return w[:, :1] * a + w[:, 1:2] * b + w[:, 2:] * c


def closest_on_mesh(points, mesh: IndexedFaceSet, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Nearest face index and closest surface point for each query point."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    n_tri = len(tri)
    face = np.zeros(len(pts), dtype=np.int64)
    closest = np.zeros_like(pts)
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        rep = np.repeat(p, n_tri, axis=0)
        q = closest_point_on_triangles(rep, np.tile(tri[:, 0], (len(p), 1)),
                                       np.tile(tri[:, 1], (len(p), 1)), np.tile(tri[:, 2], (len(p), 1)))
        d = ((rep - q) ** 2).sum(axis=1).reshape(len(p), n_tri)
        k = d.argmin(axis=1)
        face[s:s + chunk] = k
        closest[s:s + chunk] = q.reshape(len(p), n_tri, 3)[np.arange(len(p)), k]
    return face, closest


def point_mesh_distance(points, mesh: IndexedFaceSet, chunk: int = 512) -> np.ndarray:
    """Exact Euclidean distance from each point to the nearest triangle."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    n_tri = len(tri)
    best = np.full(len(pts), np.inf)
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        rep = np.repeat(p, n_tri, axis=0)
        a = np.tile(tri[:, 0], (len(p), 1))
        b = np.tile(tri[:, 1], (len(p), 1))
        c = np.tile(tri[:, 2], (len(p), 1))
        q = closest_point_on_triangles(rep, a, b, c)
        d = np.linalg.norm(rep - q, axis=1).reshape(len(p), n_tri)
        best[s:s + chunk] = d.min(axis=1)
    return best
