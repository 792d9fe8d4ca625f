"""Training losses: matched vertex l1, edge and face cross entropy, mesh chamfer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .assignment import MATCHERS, Assignment, vertex_cost_matrix
from .autodiff import Tensor, ops
from .autodiff.tensor import record
from .mesh.distance import closest_barycentric, closest_on_mesh
from .mesh.faceset import IndexedFaceSet
from .mesh.sampling import barycentric_draws, sample_surface

TRAIN_SAMPLES = 2048
EDGE_WEIGHT_CAP = 50.0
MAX_CHAMFER_FACES = 1024


# ---------------------------------------------------------------- vertices and edges

def matched_vertex_loss(pred: Tensor, target, matcher: str = "hungarian") -> tuple[Tensor, Assignment]:
    """l1 distance between predicted vertices and their assigned targets.

    The assignment is computed on the current values and held fixed; the
    loss is the summed coordinate error divided by the number of matched
    pairs. Predicted vertices left unmatched (n > m) contribute nothing.
    """
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(target) == 0:
        raise ValueError("matched_vertex_loss: empty target vertex set")
    if pred.ndim != 2 or pred.shape[1] != 3:
        raise ValueError(f"matched_vertex_loss expects (n, 3) predictions, got {pred.shape}")
    a = MATCHERS[matcher](vertex_cost_matrix(pred.data, target))
    goal = pred.data.copy()
    goal[a.rows] = target[a.cols]
    return ops.l1_loss(pred, goal.astype(pred.dtype), normalizer=len(a)), a


def edge_labels(assignment: Assignment, target_edges, n: int) -> np.ndarray:
    """(n, n) 0/1 labels: predicted i, j are joined when their targets share an edge."""
    labels = np.zeros((n, n), dtype=np.int64)
    edges = np.asarray(target_edges, dtype=np.int64).reshape(-1, 2)
    pred_of = np.full(assignment.shape[1], -1, dtype=np.int64)
    pred_of[assignment.cols] = assignment.rows
    i, j = pred_of[edges[:, 0]], pred_of[edges[:, 1]]
    ok = (i >= 0) & (j >= 0)
    labels[i[ok], j[ok]] = 1
    labels[j[ok], i[ok]] = 1
    return labels


def positive_weight(labels: np.ndarray, cap: float = EDGE_WEIGHT_CAP) -> float:
    """``#neg / #pos`` capped at ``cap``; 1 when either class is absent."""
    pos = int(np.count_nonzero(labels))
    neg = labels.size - pos
    return 1.0 if pos == 0 or neg == 0 else float(min(neg / pos, cap))


def _class_weights(labels: np.ndarray, pos_weight) -> np.ndarray | None:
    if pos_weight is None:
        return None
    w = positive_weight(labels) if pos_weight == "auto" else float(pos_weight)
    return np.where(labels == 1, w, 1.0)


def edge_ce_loss(logits: Tensor, labels, pos_weight="auto") -> Tensor:
    """Two-class cross entropy over unordered vertex pairs.

    ``logits`` is (n, n, 2) or batched (B, n, n, 2) and ``labels`` matches
    without the class axis. Only pairs i < j are scored; positives are
    weighted by ``pos_weight`` ("auto" for the capped #neg/#pos of the batch).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim == 3:
        logits, labels = ops.reshape(logits, (1,) + logits.shape), labels[None]
    b, n = logits.shape[0], logits.shape[1]
    if labels.shape != (b, n, n) or logits.shape[-1] != 2:
        raise ValueError(f"edge_ce_loss: logits {logits.shape} do not match labels {labels.shape}")
    iu, ju = np.triu_indices(n, 1)
    flat = (np.arange(b)[:, None] * n * n + iu * n + ju).ravel()
    z = ops.gather_rows(ops.reshape(logits, (b * n * n, 2)), flat)
    y = labels.reshape(-1)[flat]
    return ops.softmax_cross_entropy(z, y, _class_weights(y, pos_weight))


def face_ce_loss(logits: Tensor, labels, pos_weight=None) -> Tensor:
    """Mean two-class cross entropy over dual-graph nodes (F, 2)."""
    labels = np.asarray(labels, dtype=np.int64)
    return ops.softmax_cross_entropy(logits, labels, _class_weights(labels, pos_weight))


# ---------------------------------------------------------------- mesh chamfer

def triangle_areas(vertices: Tensor, faces: np.ndarray) -> Tensor:
    """Differentiable areas (F,) of the triangles ``faces`` over ``vertices`` (n, 3)."""
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    a, b, c = (ops.gather_rows(vertices, f[:, k]) for k in range(3))
    e1, e2 = ops.sub(b, a), ops.sub(c, a)
    s, t = (slice(None), [1, 2, 0]), (slice(None), [2, 0, 1])
    cross = ops.sub(ops.mul(ops.index(e1, s), ops.index(e2, t)), ops.mul(ops.index(e1, t), ops.index(e2, s)))
    return ops.mul(ops.sqrt(ops.sum(ops.mul(cross, cross), axis=1)), 0.5)


def surface_points(vertices: Tensor, faces: np.ndarray, bary: np.ndarray) -> Tensor:
    """Points ``sum_i bary[f, s, i] * v[faces[f, i]]`` as an (F * S, 3) tensor."""
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    corners = ops.reshape(ops.gather_rows(vertices, f.ravel()), (len(f), 1, 3, 3))
    pts = ops.sum(ops.mul(corners, bary[..., None].astype(vertices.dtype)), axis=2)
    return ops.reshape(pts, (-1, 3))


def triangle_sq_distances(vertices: Tensor, faces: np.ndarray, points: np.ndarray) -> Tensor:
    """(T, F) squared distances from fixed points to each triangle.

    The gradient uses the envelope rule: at the closest point, moving a
    corner shifts the distance as if the closest barycentric weights were
    frozen, so ``dD/dv_i = 2 w_i (c - p)``.
    """
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    q = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    v = vertices.data.astype(np.float64)
    t_n, f_n = len(q), len(f)
    corners = [np.tile(v[f[:, k]], (t_n, 1)) for k in range(3)]
    rep = np.repeat(q, f_n, axis=0)
    w = closest_barycentric(rep, *corners).reshape(t_n, f_n, 3)
    diff = np.einsum("tfk,fkd->tfd", w, v[f]) - q[:, None, :]
    out = (diff ** 2).sum(axis=-1)

    def bw(g):
        gd = 2 * g[..., None] * diff  # (T, F, 3)
        gv = np.zeros_like(v)
        for k in range(3):
            np.add.at(gv, f[:, k], np.einsum("tf,tfd->fd", w[..., k], gd))
        return (gv.astype(vertices.dtype),)

    return record(out.astype(vertices.dtype), (vertices,), bw, "triangle_sq_distances")


@dataclass
class MeshChamfer:
    loss: Tensor
    vertex_fallback: bool
    n_faces: int


def chamfer_mesh_loss(vertices: Tensor, faces, target: IndexedFaceSet, k: int = TRAIN_SAMPLES,
                      seed: int = 0, face_probs: Tensor | None = None) -> MeshChamfer:
    """Symmetric squared chamfer between a predicted mesh and a target mesh.

    Predicted side: every face carries the same fixed barycentric draws
    (``ceil(k / F)`` per face) and each face's mean squared distance to the
    target surface is weighted by its area, times its keep probability when
    ``face_probs`` is given. Target side: ``k`` area-uniform target samples,
    each scored by its squared distance to the nearest predicted face; with
    probabilities this becomes the expected distance to the nearest *kept*
    face, falling back to the nearest predicted vertex when none is kept.

    Without usable faces (none, or zero total area) the loss is the
    vertex-only point chamfer and ``vertex_fallback`` is set.
    """
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    rng = np.random.default_rng(seed)
    q = sample_surface(target, k, rng).points
    areas = triangle_areas(vertices, f) if len(f) else None
    if areas is None or not areas.data.sum() > 0:
        qt = Tensor(q.astype(vertices.dtype))
        loss = ops.add(ops.directed_chamfer(vertices, qt), ops.directed_chamfer(qt, vertices))
        return MeshChamfer(loss, True, len(f))
    if len(f) > MAX_CHAMFER_FACES:
        raise ValueError(f"chamfer_mesh_loss: {len(f)} candidate faces exceeds {MAX_CHAMFER_FACES}")
    per_face = -(-k // len(f))
    bary = barycentric_draws(len(f) * per_face, rng).reshape(len(f), per_face, 3)
    pts = surface_points(vertices, f, bary)
    _, closest = closest_on_mesh(pts.data, target)
    diff = ops.sub(pts, closest.astype(vertices.dtype))
    d = ops.mean(ops.reshape(ops.sum(ops.mul(diff, diff), axis=1), (len(f), per_face)), axis=1)
    w = areas if face_probs is None else ops.mul(areas, face_probs)
    forward = ops.div(ops.sum(ops.mul(w, d)), ops.sum(w))

    dist = triangle_sq_distances(vertices, f, q)
    probs = face_probs if face_probs is not None else Tensor(np.ones(len(f), dtype=vertices.dtype))
    fallback, _ = cKDTree(vertices.data.astype(np.float64)).query(q)
    backward = ops.expected_nearest(dist, probs, fallback ** 2)
    return MeshChamfer(ops.add(forward, backward), False, len(f))
