"""Datasets of (scan volume, target mesh) pairs, on disk or in memory."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..mesh.decimate import decimate
from ..mesh.faceset import IndexedFaceSet, MeshError
from ..mesh.objio import read_obj, write_obj
from ..mesh.shapes import CLASSES, builtin_corpus
from ..scan.tsdf import TsdfVolume, read_tsdf, scan_mesh, write_tsdf

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
INDEX_NAME = "index.json"


@dataclass
class Sample:
    name: str
    cls: str
    volume: TsdfVolume
    target: IndexedFaceSet


@dataclass(frozen=True)
class IndexEntry:
    name: str
    cls: str
    split: str
    tsdf: str
    mesh: str


@dataclass
class DatasetIndex:
    """Index of a generated dataset; paths are relative to ``root``."""

    root: Path
    entries: list[IndexEntry]

    def __post_init__(self):
        self.root = Path(self.root)
        seen: dict[str, str] = {}
        for e in self.entries:
            if e.split not in SPLITS:
                raise ValueError(f"{e.name}: unknown split {e.split!r}")
            for f in (e.tsdf, e.mesh):
                if seen.setdefault(f, e.split) != e.split:
                    raise ValueError(f"{f} appears in splits {seen[f]!r} and {e.split!r}")

    def split(self, name: str) -> list[IndexEntry]:
        return [e for e in self.entries if e.split == name]

    def save(self) -> Path:
        path = self.root / INDEX_NAME
        path.write_text(json.dumps({"entries": [asdict(e) for e in self.entries]}, indent=1) + "\n")
        return path

    @classmethod
    def load(cls, root) -> "DatasetIndex":
        root = Path(root)
        path = root / INDEX_NAME if root.is_dir() else root
        raw = json.loads(path.read_text())
        return cls(path.parent, [IndexEntry(**e) for e in raw["entries"]])

    def samples(self, split: str | None = "train") -> list[Sample]:
        chosen = self.entries if split is None else self.split(split)
        meshes: dict[str, IndexedFaceSet] = {}
        out = []
        for e in chosen:
            if e.mesh not in meshes:
                meshes[e.mesh] = read_obj(self.root / e.mesh)
            out.append(Sample(e.name, e.cls, read_tsdf(self.root / e.tsdf), meshes[e.mesh]))
        return out


def assign_splits(names: list[str], seed: int, fractions=(0.8, 0.1, 0.1)) -> dict[str, str]:
    """Shape-level split: a random permutation cut by ``fractions`` (rounded)."""
    order = np.random.default_rng(seed).permutation(len(names))
    n_val = int(round(fractions[1] * len(names)))
    n_test = int(round(fractions[2] * len(names)))
    out = {}
    for rank, i in enumerate(order):
        out[names[i]] = "val" if rank < n_val else "test" if rank < n_val + n_test else "train"
    return out


def make_sample(name: str, cls: str, mesh: IndexedFaceSet, views: int, seed, max_vertices: int = 100) -> Sample:
    """Target = mesh decimated to ``max_vertices``; input = a virtual scan of the full mesh."""
    return Sample(name, cls, scan_mesh(mesh, views, seed), decimate(mesh, max_vertices))


def builtin_samples(count: int = 5, seed: int = 0, views: int = 1, classes=CLASSES,
                    max_vertices: int = 100, trajectories: int = 1) -> list[Sample]:
    """In-memory samples of the procedural corpus; ``trajectories`` scans per shape."""
    rng = np.random.default_rng(seed)
    out = []
    for name, cls, mesh in builtin_corpus(count, seed, classes):
        for t in range(trajectories):
            out.append(make_sample(f"{name}-t{t}" if trajectories > 1 else name, cls, mesh, views, rng,
                                   max_vertices))
    return out


def generate_dataset(shapes, out_dir, views: int = 1, seed: int = 0, trajectories: int = 2,
                     max_vertices: int = 100) -> tuple[DatasetIndex, list[str]]:
    """Write targets, scans and ``index.json`` for ``shapes``.

    ``shapes`` yields (name, class, mesh-or-path). Unreadable shape files are
    skipped and returned in the second element. Each shape gets
    ``trajectories`` scans from independently placed cameras; all scans of a
    shape share its split.
    """
    out = Path(out_dir)
    (out / "targets").mkdir(parents=True, exist_ok=True)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    loaded, skipped = [], []
    for name, cls, src in shapes:
        try:
            mesh = src if isinstance(src, IndexedFaceSet) else read_obj(src).normalized_unit_cube()
            loaded.append((name, cls, mesh))
        except (OSError, MeshError) as err:
            log.warning("skipping %s: %s", name, err)
            skipped.append(name)
    splits = assign_splits([n for n, _, _ in loaded], seed)
    entries = []
    for name, cls, mesh in loaded:
        target = decimate(mesh, max_vertices)
        mesh_rel = f"targets/{name}.obj"
        write_obj(target, out / mesh_rel)
        for t in range(trajectories):
            tsdf_rel = f"scans/{name}-t{t}.tsdf"
            write_tsdf(scan_mesh(mesh, views, rng), out / tsdf_rel)
            entries.append(IndexEntry(f"{name}-t{t}", cls, splits[name], tsdf_rel, mesh_rel))
    (out / "targets" / "classes.json").write_text(
        json.dumps({name: cls for name, cls, _ in loaded}, indent=1, sort_keys=True) + "\n")
    index = DatasetIndex(out, entries)
    index.save()
    return index, skipped
