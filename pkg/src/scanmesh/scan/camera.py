from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SIZE = 128
DEFAULT_VFOV_DEG = 60.0
DISTANCE_FACTOR = 2.5


@dataclass(frozen=True)
class Intrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    @classmethod
    def from_fov(cls, width: int = DEFAULT_SIZE, height: int = DEFAULT_SIZE,
                 vfov_deg: float = DEFAULT_VFOV_DEG) -> "Intrinsics":
        f = (height / 2) / np.tan(np.radians(vfov_deg) / 2)
        return cls(width, height, f, f, width / 2, height / 2)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera looking down +z of its own frame (x right, y down).

    ``pose`` is the 4x4 camera-to-world rigid transform.
    """

    intrinsics: Intrinsics
    pose: np.ndarray

    def __post_init__(self):
        pose = np.asarray(self.pose, dtype=np.float64)
        r = pose[:3, :3]
        if pose.shape != (4, 4) or not np.allclose(r @ r.T, np.eye(3), atol=1e-9) \
                or not np.isclose(np.linalg.det(r), 1.0, atol=1e-9):
            raise ValueError("pose must be a rigid transform (orthonormal rotation, det +1)")
        object.__setattr__(self, "pose", pose)

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.pose[:3, 3]

    def pixel_rays(self) -> np.ndarray:
        """World-frame ray directions through pixel centers, scaled to unit camera z.

        Shape (H, W, 3); a hit at ray parameter t has depth t.
        """
        k = self.intrinsics
        u, v = np.meshgrid(np.arange(k.width) + 0.5, np.arange(k.height) + 0.5)
        d_cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
        return d_cam @ self.rotation.T

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.center) @ self.rotation


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    eye, target = np.asarray(eye, dtype=np.float64), np.asarray(target, dtype=np.float64)
    z = target - eye
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(up, z)) > 0.999:
        up = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    pose = np.eye(4)
    pose[:3, 0], pose[:3, 1], pose[:3, 2], pose[:3, 3] = x, y, z, eye
    return pose


def fibonacci_directions(k: int) -> np.ndarray:
    i = np.arange(k) + 0.5
    phi = np.arccos(1 - 2 * i / k)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def synthesize_cameras(center, diagonal: float, n_views: int, rng: np.random.Generator,
                       intrinsics: Intrinsics | None = None) -> list[Camera]:
    """Cameras on a sphere of radius 2.5 x ``diagonal`` around ``center``, looking at it.

    One view gets a uniformly random direction; several views are spread
    evenly (Fibonacci lattice under a random rotation).
    """
    intrinsics = intrinsics or Intrinsics.from_fov()
    center = np.asarray(center, dtype=np.float64)
    if n_views == 1:
        d = rng.normal(size=(1, 3))
        dirs = d / np.linalg.norm(d)
    else:
        dirs = fibonacci_directions(n_views) @ random_rotation(rng).T
    radius = DISTANCE_FACTOR * diagonal
    return [Camera(intrinsics, look_at(center + radius * d, center)) for d in dirs]
