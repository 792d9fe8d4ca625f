from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .faceset import IndexedFaceSet, MeshError


@dataclass
class SurfaceSamples:
    points: np.ndarray   # (k, 3)
    normals: np.ndarray  # (k, 3), normal of the face each point came from
    face_index: np.ndarray  # (k,)
    barycentric: np.ndarray  # (k, 3), weights of the face corners


def barycentric_draws(k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform barycentric coordinates on a triangle (square-root warp)."""
    r1 = np.sqrt(rng.random(k))
    r2 = rng.random(k)
    return np.stack([1 - r1, r1 * (1 - r2), r1 * r2], axis=1)


def sample_surface(mesh: IndexedFaceSet, k: int, seed=0,
                   face_weights: np.ndarray | None = None) -> SurfaceSamples:
    """Draw ``k`` points area-proportionally over faces, uniform within each face.

    ``face_weights`` multiplies the per-face area before normalisation.
    """
    areas = mesh.face_areas() if mesh.n_faces else np.zeros(0)
    if face_weights is not None:
        areas = areas * np.asarray(face_weights, dtype=np.float64)
    total = areas.sum()
    if not total > 0:
        raise MeshError("cannot sample a mesh with zero total area")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    face = rng.choice(len(areas), size=k, p=areas / total)
    bary = barycentric_draws(k, rng)
    corners = mesh.vertices[mesh.faces[face]]  # (k, 3, 3)
    points = np.einsum("kc,kcd->kd", bary, corners)
    return SurfaceSamples(points, mesh.face_normals()[face], face, bary)
