import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanmesh.mesh.faceset import IndexedFaceSet, MeshError
from scanmesh.mesh.shapes import box, builtin_corpus, icosphere, lbracket
from scanmesh.metrics import EvalReport, eval_mesh_distance, eval_normal_similarity


def square(axis=2, offset=0.0, size=1.0):
    """Axis-aligned square of side ``size`` lying in the plane coordinate[axis] = offset."""
    uv = np.array([[0, 0], [size, 0], [size, size], [0, size]], dtype=np.float64)
    v = np.insert(uv, axis, offset, axis=1)
    return IndexedFaceSet(v, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.mark.parametrize("name,cls,mesh", builtin_corpus(6, seed=4))
def test_self_comparison_is_exact(name, cls, mesh):
    assert eval_mesh_distance(mesh, mesh, 3000) == 0.0
    assert eval_normal_similarity(mesh, mesh, 3000) > 0.999


def test_orthogonal_planes_have_zero_normal_similarity():
    assert eval_normal_similarity(square(2), square(1), 3000) < 1e-12


def test_flipped_orientation_does_not_matter():
    up = square(2, 0.0)
    down = IndexedFaceSet(square(2, 0.1).vertices, up.faces[:, ::-1])
    assert eval_normal_similarity(up, down, 3000) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("d", [0.05, 0.1, 0.3])
def test_parallel_squares_are_their_offset_apart(d):
    # both squares draw the same samples, so every nearest neighbour is straight across
    assert eval_mesh_distance(square(2, 0.0), square(2, d), 10_000) == pytest.approx(d, rel=1e-9)
    assert eval_normal_similarity(square(2, 0.0), square(2, d), 3000) > 0.999


def test_distance_is_symmetric():
    a, b = box(), lbracket().normalized_unit_cube()
    assert eval_mesh_distance(a, b, 2000) == eval_mesh_distance(b, a, 2000)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0))
def test_distance_scales_with_both_meshes(s):
    a, b = box(), icosphere(1, 0.6)
    scaled = eval_mesh_distance(IndexedFaceSet(a.vertices * s, a.faces), IndexedFaceSet(b.vertices * s, b.faces), 1000)
    assert scaled == pytest.approx(s * eval_mesh_distance(a, b, 1000), rel=1e-9)


def test_translation_increases_distance():
    m = box()
    near = eval_mesh_distance(m, IndexedFaceSet(m.vertices + [0.05, 0, 0], m.faces), 3000)
    far = eval_mesh_distance(m, IndexedFaceSet(m.vertices + [0.5, 0, 0], m.faces), 3000)
    assert 0 < near < far


def test_mesh_without_faces_cannot_be_scored():
    empty = IndexedFaceSet(box().vertices, np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(MeshError):
        eval_mesh_distance(empty, box())
    with pytest.raises(MeshError):
        eval_normal_similarity(box(), empty)


def test_report_averages_and_csv(tmp_path):
    r = EvalReport()
    r.add("box-0", "box", 0.1, 0.8)
    r.add("box-1", "box", 0.3, 0.6)
    r.add("table-0", "table", 0.2, 1.0)
    assert r.mesh_distance == pytest.approx(0.2)
    assert r.per_class() == {"box": pytest.approx((0.2, 0.7)), "table": pytest.approx((0.2, 1.0))}
    rows = r.write_csv(tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "class,name,dist,nsim" and len(rows) == 4
    summary = r.write_summary_csv(tmp_path / "s.csv").read_text().splitlines()
    assert summary[1].startswith("average,0.2,")
    assert "Dist" in r.table() and "table" in r.table()
