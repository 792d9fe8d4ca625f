from .camera import Camera, Intrinsics, look_at, synthesize_cameras
from .render import DepthImage, read_depth, render_depth, write_depth
from .tsdf import (GridTransform, TsdfVolume, fuse_tsdf, normalize_to_grid, read_tsdf,
                   scan_mesh, write_tsdf)

__all__ = [
    "Camera", "DepthImage", "GridTransform", "Intrinsics", "TsdfVolume", "fuse_tsdf",
    "look_at", "normalize_to_grid", "read_depth", "read_tsdf", "render_depth", "scan_mesh",
    "synthesize_cameras", "write_depth", "write_tsdf",
]
