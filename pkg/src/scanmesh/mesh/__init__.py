from .decimate import decimate
from .faceset import IndexedFaceSet, MeshError
from .graph import (DualGraph, VertexEdgeGraph, build_dual_graph, face_features, face_labels,
                    triangle_features)
from .objio import ObjParseError, parse_obj, read_obj, write_obj
from .sampling import SurfaceSamples, sample_surface

__all__ = [
    "DualGraph", "IndexedFaceSet", "MeshError", "ObjParseError", "SurfaceSamples",
    "VertexEdgeGraph", "build_dual_graph", "decimate", "face_features", "face_labels",
    "parse_obj", "read_obj", "sample_surface", "triangle_features", "write_obj",
]
