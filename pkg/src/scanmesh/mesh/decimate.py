"""Vertex-count reduction by grid vertex clustering with quadric placement."""

from __future__ import annotations

import numpy as np

from .faceset import IndexedFaceSet, MeshError

DEFAULT_TARGET = 100


def _cluster_ids(v: np.ndarray, lo: np.ndarray, cell: float, res: int) -> np.ndarray:
    cells = np.clip(np.floor((v - lo) / cell).astype(np.int64), 0, res - 1)
    _, ids = np.unique(cells[:, 0] * res * res + cells[:, 1] * res + cells[:, 2], return_inverse=True)
    return ids.reshape(-1)


def _quadric_positions(mesh: IndexedFaceSet, ids: np.ndarray, n_clusters: int) -> np.ndarray:
    v, f = mesh.vertices, mesh.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    cross = np.cross(b - a, c - a)
    area = 0.5 * np.linalg.norm(cross, axis=1)
    n = np.divide(cross, 2 * area[:, None], out=np.zeros_like(cross), where=area[:, None] > 0)
    d = -(n * a).sum(axis=1)
    nn = area[:, None, None] * n[:, :, None] * n[:, None, :]
    nd = (area * d)[:, None] * n

    A = np.zeros((n_clusters, 3, 3))
    B = np.zeros((n_clusters, 3))
    for k in range(3):
        cid = ids[f[:, k]]
        np.add.at(A, cid, nn)
        np.add.at(B, cid, nd)
    counts = np.bincount(ids, minlength=n_clusters).astype(np.float64)
    mean = np.zeros((n_clusters, 3))
    np.add.at(mean, ids, v)
    mean /= counts[:, None]

    # regularize toward the cluster mean so flat or empty quadrics stay well posed
    lam = 1e-3 * np.trace(A, axis1=1, axis2=2) / 3 + 1e-12
    A_reg = A + lam[:, None, None] * np.eye(3)
    rhs = -B + lam[:, None] * mean
    pos = np.linalg.solve(A_reg, rhs[..., None])[..., 0]

    # keep the snapped point near the vertices it replaces
    lo = np.full((n_clusters, 3), np.inf)
    hi = np.full((n_clusters, 3), -np.inf)
    np.minimum.at(lo, ids, v)
    np.maximum.at(hi, ids, v)
    span = np.maximum(hi - lo, 1e-12)
    bad = np.any((pos < lo - 0.5 * span) | (pos > hi + 0.5 * span), axis=1)
    pos[bad] = mean[bad]
    return pos


def cluster_mesh(mesh: IndexedFaceSet, res: int) -> IndexedFaceSet:
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    cell = float((hi - lo).max()) / res
    ids = _cluster_ids(mesh.vertices, lo, cell, res)
    n_clusters = int(ids.max()) + 1
    pos = _quadric_positions(mesh, ids, n_clusters)
    f = ids[mesh.faces]
    keep = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    f = f[keep]
    if len(f):
        _, first = np.unique(np.sort(f, axis=1), axis=0, return_index=True)
        f = f[np.sort(first)]
    return IndexedFaceSet(pos, f).compact()


def decimate(mesh: IndexedFaceSet, target_vertices: int = DEFAULT_TARGET) -> IndexedFaceSet:
    """Reduce ``mesh`` to at most ``target_vertices`` vertices.

    Vertices are clustered on a cubic grid over the bounding box; the grid
    resolution is the finest one whose cluster count fits the budget. Each
    cluster is replaced by the point minimizing the area-weighted plane
    quadric of its faces. Faces collapsing to an edge or point are dropped,
    as are unreferenced vertices. Meshes already within budget are returned
    as they are.
    """
    if target_vertices < 4:
        raise MeshError("target_vertices must be >= 4")
    if mesh.n_vertices <= target_vertices:
        return mesh
    if mesh.n_faces == 0:
        raise MeshError("cannot decimate a mesh without faces")
    mesh = mesh.compact()
    if mesh.n_vertices <= target_vertices:
        return mesh
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0:
        raise MeshError("mesh has zero extent")

    def n_clusters(res: int) -> int:
        return int(_cluster_ids(mesh.vertices, lo, extent / res, res).max()) + 1

    lo_res, hi_res = 1, 2
    while n_clusters(hi_res) <= target_vertices and hi_res < 4096:
        lo_res, hi_res = hi_res, hi_res * 2
    while hi_res - lo_res > 1:
        mid = (lo_res + hi_res) // 2
        if n_clusters(mid) <= target_vertices:
            lo_res = mid
        else:
            hi_res = mid
    # cluster counts are not strictly monotone in resolution; scan upward a little
    best = lo_res
    for res in range(lo_res + 1, lo_res + 6):
        if n_clusters(res) <= target_vertices:
            best = res
    return cluster_mesh(mesh, best)
