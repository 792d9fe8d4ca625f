"""Grid normalization and truncated distance fusion into a 5-channel volume."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ..mesh.faceset import IndexedFaceSet, MeshError
from .camera import synthesize_cameras
from .render import DepthImage, render_depth

RESOLUTION = 32
TRUNCATION = 3.0
_SURFEL_K = 8
CHANNELS = ("abs_distance", "known", "x", "y", "z")


@dataclass(frozen=True)
class GridTransform:
    """Similarity transform mesh space -> grid space: ``g = scale * x + offset``."""

    scale: float
    offset: np.ndarray

    def to_grid(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) * self.scale + self.offset

    def to_world(self, g) -> np.ndarray:
        return (np.asarray(g, dtype=np.float64) - self.offset) / self.scale

    def matrix(self) -> np.ndarray:
        m = np.eye(4) * self.scale
        m[3, 3] = 1.0
        m[:3, 3] = self.offset
        return m

    @classmethod
    def from_matrix(cls, m) -> "GridTransform":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        return cls(float(m[0, 0]), m[:3, 3].copy())


def normalize_to_grid(mesh: IndexedFaceSet, resolution: int = RESOLUTION,
                      padding: float = TRUNCATION) -> tuple[IndexedFaceSet, GridTransform]:
    """Scale the longest bounding-box side to ``resolution - 2*padding`` voxels, centered."""
    lo, hi = mesh.bbox()
    extent = float((hi - lo).max())
    if not extent > 0:
        raise MeshError("mesh has zero extent")
    scale = (resolution - 2 * padding) / extent
    offset = resolution / 2 - scale * (lo + hi) / 2
    xf = GridTransform(scale, offset)
    return IndexedFaceSet(xf.to_grid(mesh.vertices), mesh.faces), xf


@dataclass
class TsdfVolume:
    """(5, R, R, R) float32 grid indexed [channel, x, y, z].

    Channel 0 is the truncated unsigned distance in voxels, channel 1 the
    known mask, channels 2-4 the mesh-space coordinates of the voxel center.
    """

    data: np.ndarray
    transform: GridTransform
    truncation: float = TRUNCATION
    meta: dict = field(default_factory=dict)

    @property
    def resolution(self) -> int:
        return self.data.shape[1]

    @property
    def abs_distance(self) -> np.ndarray:
        return self.data[0]

    @property
    def known(self) -> np.ndarray:
        return self.data[1]

    @property
    def coords(self) -> np.ndarray:
        return self.data[2:5]


def voxel_centers(resolution: int = RESOLUTION) -> np.ndarray:
    """(R, R, R, 3) grid-space centers, voxel i spanning [i, i + 1)."""
    r = np.arange(resolution) + 0.5
    return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1)


def coordinate_channels(transform: GridTransform, resolution: int = RESOLUTION) -> np.ndarray:
    return np.moveaxis(transform.to_world(voxel_centers(resolution)), -1, 0)


def _surfels(img: DepthImage) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Back-project every pixel to a world-space disc: center, unit normal, radius.

    The radius is half the pixel diagonal at the hit depth, stretched by the
    slant of the surface so that neighbouring discs tile a tilted plane.
    """
    cam = img.camera
    k = cam.intrinsics
    v, u = np.mgrid[0:k.height, 0:k.width]
    ray = np.stack([(u + 0.5 - k.cx) / k.fx, (v + 0.5 - k.cy) / k.fy, np.ones(u.shape)], axis=-1)
    ray_w = ray @ cam.rotation.T
    points = cam.center + ray_w * img.depth[..., None]
    if img.normals is not None:
        normals = img.normals
    else:
        normals = -ray_w / np.linalg.norm(ray_w, axis=-1, keepdims=True)
    cos = np.abs((normals * ray_w).sum(-1)) / np.linalg.norm(ray_w, axis=-1)
    radius = 0.5 * np.hypot(1 / k.fx, 1 / k.fy) * img.depth / np.maximum(cos, 0.2)
    return points, normals, radius


def _view_distances(img: DepthImage, centers: np.ndarray, truncation: float,
                    behind: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-view unsigned distance of each voxel center to the observed surface.

    Every hit pixel is treated as a small disc on the plane of the triangle
    it saw; the estimate is the distance to the nearest of the discs whose
    centers are closest to the voxel, clamped to ``truncation``. Visibility is decided along the voxel's own ray: a voxel
    is observed when the ray misses the mesh or the voxel lies in front of
    the hit, or behind it by less than ``behind`` voxels.
    """
    cam = img.camera
    k = cam.intrinsics
    pc = cam.world_to_camera(centers)
    z = pc[:, 2]
    front = z > 1e-9
    zs = np.where(front, z, 1.0)
    u = np.floor(k.fx * pc[:, 0] / zs + k.cx).astype(np.int64)
    v = np.floor(k.fy * pc[:, 1] / zs + k.cy).astype(np.int64)
    inside = front & (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
    occluded = np.zeros(len(centers), dtype=bool)
    for du in (-1, 0, 1):
        for dv in (-1, 0, 1):
            d = img.depth[np.clip(v + dv, 0, k.height - 1), np.clip(u + du, 0, k.width - 1)]
            occluded |= (d > 0) & (z >= d + behind)
    observed = inside & ~occluded

    points, normals, radius = _surfels(img)
    hit = img.depth > 0
    best = np.full(len(centers), float(truncation))
    if hit.any() and observed.any():
        points, normals, radius = points[hit], normals[hit], radius[hit]
        nk = min(_SURFEL_K, len(points))
        query = centers[observed]
        _, idx = cKDTree(points).query(query, k=nk, distance_upper_bound=truncation + radius.max())
        idx = idx.reshape(len(query), nk)
        valid = idx < len(points)
        idx = np.where(valid, idx, 0)
        rel = query[:, None, :] - points[idx]
        n = normals[idx]
        plane = (rel * n).sum(-1)
        lateral = np.linalg.norm(rel - plane[..., None] * n, axis=-1)
        dist = np.hypot(plane, np.maximum(lateral - radius[idx], 0.0))
        best[observed] = np.where(valid, dist, np.inf).min(axis=1)
    return np.clip(best, 0.0, truncation), observed


def fuse_tsdf(depths: list[DepthImage], transform: GridTransform, resolution: int = RESOLUTION,
              truncation: float = TRUNCATION, behind: float | None = None) -> TsdfVolume:
    """Average per-view truncated unsigned distances into a voxel grid.

    Depth images live in grid space (1 unit = 1 voxel). A voxel counts as
    observed by a view when it projects into the image and lies in front of
    the measured surface or behind it by less than ``behind`` voxels
    (default half the truncation band, since what lies further back is
    occluded and may belong to a different, unseen surface). Its per-view
    distance is the distance to the nearest observed surface patch, clamped
    to ``truncation``, so observed empty space far from any hit holds
    ``truncation``. The stored value is the mean over observing views;
    unobserved voxels hold ``truncation`` with known = 0.
    """
    if not depths:
        raise ValueError("fuse_tsdf needs at least one depth image")
    behind = truncation / 2 if behind is None else behind
    centers = voxel_centers(resolution).reshape(-1, 3)
    total = np.zeros(len(centers))
    count = np.zeros(len(centers))
    for img in depths:
        sd, observed = _view_distances(img, centers, truncation, behind)
        total[observed] += np.abs(sd[observed])
        count[observed] += 1

    known = count > 0
    abs_dist = np.where(known, total / np.maximum(count, 1), truncation)
    abs_dist = np.clip(abs_dist, 0.0, truncation)
    shape = (resolution,) * 3
    data = np.empty((5,) + shape, dtype=np.float32)
    data[0] = abs_dist.reshape(shape)
    data[1] = known.reshape(shape)
    data[2:5] = coordinate_channels(transform, resolution)
    meta = {"views": len(depths), "no_observations": not bool(known.any())}
    return TsdfVolume(data, transform, truncation, meta)


def scan_mesh(mesh: IndexedFaceSet, n_views: int = 1, seed=0, resolution: int = RESOLUTION,
              truncation: float = TRUNCATION) -> TsdfVolume:
    """Virtually scan ``mesh`` (mesh space) from synthesized cameras and fuse a volume."""
    grid_mesh, xf = normalize_to_grid(mesh, resolution, truncation)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = grid_mesh.bbox()
    cams = synthesize_cameras((lo + hi) / 2, float(np.linalg.norm(hi - lo)), n_views, rng)
    depths = [render_depth(grid_mesh, c) for c in cams]
    vol = fuse_tsdf(depths, xf, resolution, truncation)
    vol.meta["skipped_degenerate"] = sum(d.skipped_degenerate for d in depths)
    return vol


_MAGIC = b"S2MT"
_HEADER = struct.Struct("<4sIIfI16d")


def write_tsdf(vol: TsdfVolume, path) -> Path:
    """Little-endian binary: magic 'S2MT', version u32 (1), resolution u32,
    truncation f32, flags u32 (bit 0: no observations), world-to-grid 4x4
    f64 row-major, then 5 channel planes of R^3 float32 in [x][y][z] order."""
    path = Path(path)
    flags = 1 if vol.meta.get("no_observations") else 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, vol.resolution, vol.truncation, flags,
                              *vol.transform.matrix().reshape(-1)))
        fh.write(np.ascontiguousarray(vol.data, dtype="<f4").tobytes())
    return path


def read_tsdf(path) -> TsdfVolume:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated TSDF header")
    magic, version, res, trunc, flags, *mat = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not a TSDF volume (magic={magic!r}, version={version})")
    n = 5 * res ** 3
    if len(raw) != _HEADER.size + 4 * n:
        raise ValueError(f"{path}: expected {n} float32 values")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size, count=n).reshape(5, res, res, res)
    return TsdfVolume(data.astype(np.float32), GridTransform.from_matrix(mat), float(trunc),
                      {"no_observations": bool(flags & 1)})
