"""Wavefront OBJ reading and writing (positions and triangle faces only)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .faceset import IndexedFaceSet, MeshError


class ObjParseError(MeshError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


def _face_index(token: str, n_vertices: int, path, lineno: int) -> int:
    head = token.split("/")[0]
    try:
        k = int(head)
    except ValueError:
        raise ObjParseError(path, lineno, f"bad face index {token!r}") from None
    idx = k - 1 if k > 0 else n_vertices + k
    if k == 0 or not 0 <= idx < n_vertices:
        raise ObjParseError(path, lineno, f"face index {k} out of range (have {n_vertices} vertices)")
    return idx


def parse_obj(text: str, path="<string>") -> IndexedFaceSet:
    """Parse OBJ text. Polygons are fan-triangulated from their first corner."""
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise ObjParseError(path, lineno, "vertex needs 3 coordinates")
            try:
                verts.append([float(x) for x in rest[:3]])
            except ValueError:
                raise ObjParseError(path, lineno, f"bad vertex {line!r}") from None
        elif tag == "f":
            if len(rest) < 3:
                raise ObjParseError(path, lineno, "face needs at least 3 corners")
            idx = [_face_index(tok, len(verts), path, lineno) for tok in rest]
            for k in range(1, len(idx) - 1):
                tri = (idx[0], idx[k], idx[k + 1])
                if len(set(tri)) == 3:
                    faces.append(tri)
        # vt, vn, o, g, s, usemtl, mtllib: ignored
    return IndexedFaceSet(np.array(verts, dtype=np.float64).reshape(-1, 3),
                          np.array(faces, dtype=np.int64).reshape(-1, 3))


def read_obj(path) -> IndexedFaceSet:
    path = Path(path)
    return parse_obj(path.read_text(), path)


def format_obj(mesh: IndexedFaceSet) -> str:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    return "\n".join(lines) + "\n"


def write_obj(mesh: IndexedFaceSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_obj(mesh))
    return path
