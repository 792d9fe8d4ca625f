"""Depth rendering by ray casting against triangles."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..mesh.faceset import IndexedFaceSet, MeshError
from .camera import Camera, Intrinsics

log = logging.getLogger(__name__)

_EPS = 1e-12


@dataclass
class DepthImage:
    """Per-pixel z-depth in mesh units (0 = no hit) with the camera that took it.

    ``normals`` holds the world-frame unit normal of the triangle hit at each
    pixel (zeros where nothing was hit).
    """

    depth: np.ndarray
    camera: Camera
    normals: np.ndarray | None = None
    skipped_degenerate: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]


def intersect_rays(origin: np.ndarray, dirs: np.ndarray, tri: np.ndarray,
                   chunk_elems: int = 2_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Nearest two-sided Moller-Trumbore hit for each ray.

    ``dirs`` is (R, 3), ``tri`` is (T, 3, 3). Returns the ray parameter of the
    nearest hit (``inf`` for none) and the index of the triangle hit (-1).
    """
    n_rays = len(dirs)
    best_t = np.full(n_rays, np.inf)
    best_f = np.full(n_rays, -1, dtype=np.int64)
    if len(tri) == 0:
        return best_t, best_f
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    s = origin - v0  # (T, 3)
    q = np.cross(s, e1)  # (T, 3)
    step = max(1, chunk_elems // len(tri))
    for start in range(0, n_rays, step):
        d = dirs[start:start + step]  # (r, 3)
        p = np.cross(d[:, None, :], e2[None, :, :])  # (r, T, 3)
        det = np.einsum("rtk,tk->rt", p, e1)
        ok = np.abs(det) > _EPS
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        u = np.einsum("rtk,tk->rt", p, s) * inv
        v = (d @ q.T) * inv
        t = (e2 * q).sum(axis=1)[None, :] * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > _EPS)
        t = np.where(hit, t, np.inf)
        k = t.argmin(axis=1)
        tk = t[np.arange(len(d)), k]
        found = np.isfinite(tk)
        best_t[start:start + step] = tk
        best_f[start:start + step] = np.where(found, k, -1)
    return best_t, best_f


def render_depth(mesh: IndexedFaceSet, camera: Camera) -> DepthImage:
    """Ray-cast a z-depth image (two-sided; nearest hit wins).

    Each triangle is only tested against the pixels inside its projected
    bounding box. Degenerate (zero-area) triangles are skipped and counted.
    """
    if mesh.n_faces == 0:
        raise MeshError("cannot render a mesh without faces")
    areas = mesh.face_areas()
    keep = areas > 1e-14
    skipped = int((~keep).sum())
    if skipped:
        log.warning("render_depth: skipped %d degenerate triangles", skipped)
    k = camera.intrinsics
    rays = camera.pixel_rays()
    cam_pts = camera.world_to_camera(mesh.vertices)
    if np.any(cam_pts[np.unique(mesh.faces), 2] <= 1e-9):
        raise MeshError("camera must be in front of the whole mesh")
    uv = cam_pts[:, :2] / cam_pts[:, 2:3] * [k.fx, k.fy] + [k.cx, k.cy]
    depth = np.full((k.height, k.width), np.inf)
    face_id = np.full((k.height, k.width), -1, dtype=np.int64)
    for fi in np.nonzero(keep)[0]:
        corners = uv[mesh.faces[fi]]
        u0, v0 = np.floor(corners.min(axis=0) - 0.5).astype(int)
        u1, v1 = np.ceil(corners.max(axis=0) + 0.5).astype(int)
        u0, v0 = max(u0, 0), max(v0, 0)
        u1, v1 = min(u1, k.width), min(v1, k.height)
        if u0 >= u1 or v0 >= v1:
            continue
        block = rays[v0:v1, u0:u1].reshape(-1, 3)
        t, f = intersect_rays(camera.center, block, mesh.vertices[mesh.faces[fi]][None])
        t = t.reshape(v1 - v0, u1 - u0)
        cur = depth[v0:v1, u0:u1]
        better = t < cur
        cur[better] = t[better]
        face_id[v0:v1, u0:u1][better] = fi
    hit = face_id >= 0
    normals = np.zeros((k.height, k.width, 3))
    normals[hit] = mesh.face_normals()[face_id[hit]]
    return DepthImage(np.where(hit, depth, 0.0), camera, normals, skipped)


_DEPTH_MAGIC = b"S2MD"
_DEPTH_HEADER = struct.Struct("<4sIII4d16d")


def write_depth(img: DepthImage, path) -> Path:
    """Little-endian binary: magic 'S2MD', version u32, width u32, height u32,
    fx fy cx cy f64, camera-to-world pose 16 x f64 (row-major), then
    height x width float32 depths (row-major)."""
    k = img.camera.intrinsics
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_DEPTH_HEADER.pack(_DEPTH_MAGIC, 1, img.width, img.height,
                                    k.fx, k.fy, k.cx, k.cy, *img.camera.pose.reshape(-1)))
        fh.write(img.depth.astype("<f4").tobytes())
    return path


def read_depth(path) -> DepthImage:
    raw = Path(path).read_bytes()
    magic, version, w, h, fx, fy, cx, cy, *pose = _DEPTH_HEADER.unpack_from(raw)
    if magic != _DEPTH_MAGIC or version != 1:
        raise ValueError(f"{path}: not a depth image (magic={magic!r}, version={version})")
    depth = np.frombuffer(raw, dtype="<f4", offset=_DEPTH_HEADER.size, count=w * h)
    cam = Camera(Intrinsics(w, h, fx, fy, cx, cy), np.array(pose).reshape(4, 4))
    return DepthImage(depth.reshape(h, w).astype(np.float64), cam)
