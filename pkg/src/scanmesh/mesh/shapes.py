"""Procedural shapes: the builtin training corpus and a few test solids."""

from __future__ import annotations

import numpy as np

from .faceset import IndexedFaceSet, concatenate

CLASSES = ("box", "lbracket", "table", "cylinder")


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> IndexedFaceSet:
    sx, sy, sz = np.asarray(size, dtype=np.float64) / 2
    cx, cy, cz = center
    v = np.array([[cx + x * sx, cy + y * sy, cz + z * sz]
                  for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)])
    # outward winding; vertex id = 4*x + 2*y + z with x, y, z in {0, 1}
    f = [(0, 1, 3), (0, 3, 2), (4, 6, 7), (4, 7, 5),
         (0, 4, 5), (0, 5, 1), (2, 3, 7), (2, 7, 6),
         (0, 2, 6), (0, 6, 4), (1, 5, 7), (1, 7, 3)]
    return IndexedFaceSet(v, f)


def extrude(polygon, height: float) -> IndexedFaceSet:
    """Prism over a counter-clockwise 2D polygon that is star-shaped from its first corner."""
    p = np.asarray(polygon, dtype=np.float64)
    n = len(p)
    bottom = np.column_stack([p, np.zeros(n)])
    top = np.column_stack([p, np.full(n, height)])
    faces = []
    for k in range(1, n - 1):
        faces.append((0, k + 1, k))
        faces.append((n, n + k, n + k + 1))
    for k in range(n):
        a, b = k, (k + 1) % n
        faces.append((a, b, n + b))
        faces.append((a, n + b, n + a))
    return IndexedFaceSet(np.concatenate([bottom, top]), faces)


def lbracket(length=1.0, height=0.8, thickness=0.25, depth=0.5) -> IndexedFaceSet:
    t = thickness
    poly = [(0, 0), (length, 0), (length, t), (t, t), (t, height), (0, height)]
    return extrude(poly, depth)


def cylinder(radius=0.5, height=1.0, segments=12) -> IndexedFaceSet:
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    return extrude(np.column_stack([radius * np.cos(ang), radius * np.sin(ang)]), height)


def wedge(width=1.0, height=0.6, depth=0.8) -> IndexedFaceSet:
    return extrude([(0, 0), (width, 0), (0, height)], depth)


def pyramid(base=1.0, height=0.8) -> IndexedFaceSet:
    b = base / 2
    v = [(-b, -b, 0), (b, -b, 0), (b, b, 0), (-b, b, 0), (0, 0, height)]
    f = [(0, 2, 1), (0, 3, 2), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    return IndexedFaceSet(v, f)


def table(width=1.0, depth=0.7, height=0.7, top=0.1, leg=0.12) -> IndexedFaceSet:
    parts = [box((width, depth, top), (0, 0, height - top / 2))]
    lx, ly = width / 2 - leg / 2, depth / 2 - leg / 2
    leg_h = height - top
    for sx in (-1, 1):
        for sy in (-1, 1):
            parts.append(box((leg, leg, leg_h), (sx * lx, sy * ly, leg_h / 2)))
    return concatenate(parts)


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> IndexedFaceSet:
    """Subdivided icosahedron; 3 subdivisions give 642 vertices."""
    t = (1 + 5 ** 0.5) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    return IndexedFaceSet(np.array(verts) * radius, f)


def random_shape(cls: str, rng: np.random.Generator) -> IndexedFaceSet:
    u = rng.uniform
    if cls == "box":
        mesh = box((u(0.4, 1.0), u(0.4, 1.0), u(0.4, 1.0)))
    elif cls == "lbracket":
        mesh = lbracket(u(0.7, 1.0), u(0.5, 1.0), u(0.15, 0.35), u(0.3, 0.8))
    elif cls == "table":
        mesh = table(u(0.8, 1.0), u(0.5, 0.9), u(0.5, 0.9), u(0.06, 0.14), u(0.08, 0.16))
    elif cls == "cylinder":
        mesh = cylinder(u(0.3, 0.6), u(0.4, 1.0), int(rng.integers(8, 14)))
    elif cls == "wedge":
        mesh = wedge(u(0.6, 1.0), u(0.4, 1.0), u(0.4, 1.0))
    elif cls == "pyramid":
        mesh = pyramid(u(0.6, 1.0), u(0.5, 1.0))
    else:
        raise ValueError(f"unknown shape class {cls!r}")
    return mesh.normalized_unit_cube()


def builtin_corpus(count: int = 50, seed: int = 0, classes=CLASSES) -> list[tuple[str, str, IndexedFaceSet]]:
    """``count`` shapes cycling through ``classes``: (name, class, unit-cube mesh)."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        cls = classes[i % len(classes)]
        out.append((f"{cls}-{i:03d}", cls, random_shape(cls, rng)))
    return out
