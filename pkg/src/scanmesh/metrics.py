"""Mesh evaluation: sampled surface distance and normal similarity."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .mesh.faceset import IndexedFaceSet, MeshError
from .mesh.sampling import sample_surface

EVAL_SAMPLES = 10_000
NORMAL_WINDOW = 0.03


def _samples(mesh: IndexedFaceSet, k: int, seed: int):
    if mesh.n_faces == 0:
        raise MeshError("cannot evaluate a mesh without faces")
    return sample_surface(mesh, k, seed)


def eval_mesh_distance(a: IndexedFaceSet, b: IndexedFaceSet, k: int = EVAL_SAMPLES,
                       seed: int = 0) -> float:
    """Mean unsquared nearest-neighbour distance between surface samples, averaged both ways.

    Both meshes are sampled with the same seed, so a mesh compared with
    itself scores exactly 0.
    """
    pa, pb = _samples(a, k, seed).points, _samples(b, k, seed).points
    dab, _ = cKDTree(pb).query(pa)
    dba, _ = cKDTree(pa).query(pb)
    return float(0.5 * (dab.mean() + dba.mean()))


def _directed_normal_similarity(src, dst, window: float) -> float:
    tree = cKDTree(dst.points)
    _, nearest = tree.query(src.points)
    cands = tree.query_ball_point(dst.points[nearest], r=window)
    scores = np.empty(len(src.points))
    for i, (n, c) in enumerate(zip(src.normals, cands)):
        idx = np.asarray(c if c else [nearest[i]], dtype=np.int64)
        scores[i] = np.abs(dst.normals[idx] @ n).max()
    return float(scores.mean())


def eval_normal_similarity(a: IndexedFaceSet, b: IndexedFaceSet, k: int = EVAL_SAMPLES,
                           window: float = NORMAL_WINDOW, seed: int = 0) -> float:
    """Symmetrized mean of the best |cos| between a sample's normal and the other mesh's.

    For each sample the other mesh's samples within ``window`` of its
    nearest counterpart are searched for the best-aligned normal.
    """
    sa, sb = _samples(a, k, seed), _samples(b, k, seed)
    value = 0.5 * (_directed_normal_similarity(sa, sb, window) + _directed_normal_similarity(sb, sa, window))
    return float(np.clip(value, 0.0, 1.0))


@dataclass
class EvalRow:
    name: str
    cls: str
    dist: float
    nsim: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def add(self, name: str, cls: str, dist: float, nsim: float) -> None:
        self.rows.append(EvalRow(name, cls, dist, nsim))

    @property
    def mesh_distance(self) -> float:
        return float(np.mean([r.dist for r in self.rows])) if self.rows else float("nan")

    @property
    def normal_similarity(self) -> float:
        return float(np.mean([r.nsim for r in self.rows])) if self.rows else float("nan")

    def per_class(self) -> dict[str, tuple[float, float]]:
        groups: dict[str, list[EvalRow]] = defaultdict(list)
        for r in self.rows:
            groups[r.cls].append(r)
        return {c: (float(np.mean([r.dist for r in g])), float(np.mean([r.nsim for r in g])))
                for c, g in sorted(groups.items())}

    def write_csv(self, path) -> Path:
        """Per-sample rows ``class,name,dist,nsim``."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "name", "dist", "nsim"])
            for r in self.rows:
                w.writerow([r.cls, r.name, f"{r.dist:.6g}", f"{r.nsim:.6g}"])
        return path

    def write_summary_csv(self, path) -> Path:
        """One row per class plus ``average``: ``class,dist,nsim``."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "dist", "nsim"])
            w.writerow(["average", f"{self.mesh_distance:.6g}", f"{self.normal_similarity:.6g}"])
            for c, (d, n) in self.per_class().items():
                w.writerow([c, f"{d:.6g}", f"{n:.6g}"])
        return path

    def table(self) -> str:
        """Wide text table: Average then each class, each with Dist and NSim."""
        groups = [("Average", (self.mesh_distance, self.normal_similarity))] + list(self.per_class().items())
        head = " | ".join(f"{name:^17}" for name, _ in groups)
        sub = " | ".join(f"{'Dist':>8} {'NSim':>8}" for _ in groups)
        vals = " | ".join(f"{d:8.4f} {n:8.2f}" for _, (d, n) in groups)
        return "\n".join([head, sub, vals])
