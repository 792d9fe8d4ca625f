import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanmesh.mesh import IndexedFaceSet, MeshError
from scanmesh.mesh.distance import point_mesh_distance
from scanmesh.mesh.shapes import box, icosphere, lbracket, table
from scanmesh.scan import (Camera, GridTransform, Intrinsics, fuse_tsdf, look_at,
                           normalize_to_grid, read_depth, read_tsdf, render_depth, scan_mesh,
                           synthesize_cameras, write_depth, write_tsdf)
from scanmesh.scan.render import intersect_rays
from scanmesh.scan.tsdf import TRUNCATION, voxel_centers

IDENTITY = GridTransform(1.0, np.zeros(3))


def wall(z=20.0, lo=-100.0, hi=132.0, flip=False):
    v = np.array([[lo, lo, z], [hi, lo, z], [hi, hi, z], [lo, hi, z]])
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return IndexedFaceSet(v, f[:, ::-1] if flip else f)


def front_camera(eye_z=-100.0, size=128):
    return Camera(Intrinsics.from_fov(size, size), look_at([16.0, 16.0, eye_z], [16.0, 16.0, 20.0]))


# ---------------------------------------------------------------- cameras


def test_pixel_rays_have_unit_camera_depth():
    cam = Camera(Intrinsics.from_fov(8, 8), look_at([1.0, 2.0, 3.0], [0.0, 0.0, 0.0]))
    z = cam.world_to_camera(cam.center + cam.pixel_rays().reshape(-1, 3))[:, 2]
    assert np.allclose(z, 1.0)


def test_camera_rejects_non_rigid_pose():
    with pytest.raises(ValueError):
        Camera(Intrinsics.from_fov(), np.diag([2.0, 1.0, 1.0, 1.0]))


def test_synthesized_cameras_sit_on_sphere_and_look_at_center():
    rng = np.random.default_rng(0)
    center = np.array([1.0, -2.0, 0.5])
    for n in (1, 8):
        for cam in synthesize_cameras(center, 4.0, n, rng):
            assert np.linalg.norm(cam.center - center) == pytest.approx(10.0)
            assert np.allclose(cam.world_to_camera(center[None])[0, :2], 0.0, atol=1e-9)


# ---------------------------------------------------------------- rendering


def test_fronto_parallel_wall_has_constant_z_depth():
    img = render_depth(wall(), front_camera())
    # z-depth, not ray length: every pixel of a fronto-parallel plane reads 120
    assert np.allclose(img.depth, 120.0)


def test_back_facing_triangles_are_hit():
    a = render_depth(wall(), front_camera())
    b = render_depth(wall(flip=True), front_camera())
    assert np.array_equal(a.depth, b.depth)


def test_nearest_hit_wins():
    near, far = wall(z=10.0), wall(z=20.0)
    img = render_depth(IndexedFaceSet(np.vstack([far.vertices, near.vertices]),
                                      np.vstack([far.faces, near.faces + 4])), front_camera())
    assert np.allclose(img.depth, 110.0)


def test_render_matches_brute_force_ray_cast():
    rng = np.random.default_rng(4)
    sphere = icosphere(1)
    squashed = IndexedFaceSet(sphere.vertices * rng.uniform(0.5, 1.5, 3), sphere.faces)
    mesh, _ = normalize_to_grid(squashed)
    cam = synthesize_cameras(np.full(3, 16.0), 45.0, 1, rng, Intrinsics.from_fov(40, 40))[0]
    img = render_depth(mesh, cam)
    t, f = intersect_rays(cam.center, cam.pixel_rays().reshape(-1, 3), mesh.vertices[mesh.faces])
    oracle = np.where(f >= 0, t, 0.0).reshape(40, 40)
    assert (oracle > 0).any() and (oracle == 0).any()
    assert np.allclose(img.depth, oracle, atol=1e-9)


def test_render_skips_degenerate_triangles():
    m = wall()
    v = np.vstack([m.vertices, [[0.0, 0.0, 5.0], [1.0, 1.0, 5.0], [2.0, 2.0, 5.0]]])
    img = render_depth(IndexedFaceSet(v, np.vstack([m.faces, [[4, 5, 6]]])), front_camera())
    assert img.skipped_degenerate == 1
    assert np.allclose(img.depth, 120.0)


def test_render_requires_mesh_in_front_of_camera():
    with pytest.raises(MeshError):
        # the wall lies behind this camera
        cam = Camera(Intrinsics.from_fov(16, 16), look_at([16.0, 16.0, 15.0], [16.0, 16.0, 0.0]))
        render_depth(wall(), cam)


def test_depth_image_round_trip(tmp_path):
    img = render_depth(wall(), front_camera(size=16))
    back = read_depth(write_depth(img, tmp_path / "d.bin"))
    assert np.array_equal(back.depth, img.depth.astype(np.float32))
    assert np.allclose(back.camera.pose, img.camera.pose)
    assert back.camera.intrinsics == img.camera.intrinsics


# ---------------------------------------------------------------- normalization


def test_normalize_extent_2_1_1_gives_scale_13():
    m = box((2.0, 1.0, 1.0))
    g, xf = normalize_to_grid(m)
    assert xf.scale == pytest.approx(13.0)
    lo, hi = g.bbox()
    assert (hi - lo)[0] == pytest.approx(26.0)


def test_unit_cube_occupies_voxels_3_to_29():
    g, _ = normalize_to_grid(box())
    lo, hi = g.bbox()
    assert np.allclose(lo, 3.0) and np.allclose(hi, 29.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_grid_round_trip(size, center):
    _, xf = normalize_to_grid(box(tuple(size), tuple(center)))
    c = voxel_centers(8).reshape(-1, 3)
    assert np.allclose(xf.to_grid(xf.to_world(c)), c, atol=1e-6)
    assert np.allclose(GridTransform.from_matrix(xf.matrix()).to_grid(c), xf.to_grid(c))


def test_normalize_rejects_zero_extent():
    with pytest.raises(MeshError):
        normalize_to_grid(IndexedFaceSet(np.zeros((3, 3)), np.array([[0, 1, 2]])))


# ---------------------------------------------------------------- fusion


@pytest.fixture(scope="module")
def wall_volume():
    return fuse_tsdf([render_depth(wall(), front_camera())], IDENTITY)


def test_flat_wall_front_voxels_carry_perpendicular_distance(wall_volume):
    c = voxel_centers()
    front = (c[..., 2] < 20.0) & (20.0 - c[..., 2] < TRUNCATION)
    assert front.any()
    assert np.allclose(wall_volume.abs_distance[front], 20.0 - c[..., 2][front], atol=1e-5)
    assert wall_volume.known[front].all()


def test_far_free_space_is_clamped_and_known(wall_volume):
    c = voxel_centers()
    free = c[..., 2] < 20.0 - TRUNCATION
    assert np.all(wall_volume.abs_distance[free] == TRUNCATION)
    assert wall_volume.known[free].all()


def test_space_deep_behind_the_surface_is_unknown(wall_volume):
    c = voxel_centers()
    deep = c[..., 2] > 20.0 + TRUNCATION
    assert not wall_volume.known[deep].any()
    assert np.all(wall_volume.abs_distance[deep] == TRUNCATION)


def test_coordinate_channels_hold_world_positions():
    m = lbracket()
    vol = scan_mesh(m, 1, seed=0)
    xf = vol.transform
    assert np.allclose(np.moveaxis(vol.coords, 0, -1), xf.to_world(voxel_centers()), atol=1e-6)


def test_no_observations_is_flagged():
    cam = Camera(Intrinsics.from_fov(16, 16), look_at([16.0, 16.0, -100.0], [16.0, 16.0, -200.0]))
    m = IndexedFaceSet(np.array([[0.0, 0, -150], [1, 0, -150], [0, 1, -150]]), np.array([[0, 1, 2]]))
    vol = fuse_tsdf([render_depth(m, cam)], IDENTITY)
    assert vol.meta["no_observations"]
    assert not vol.known.any()


def test_fuse_needs_a_view():
    with pytest.raises(ValueError):
        fuse_tsdf([], IDENTITY)


def grid_views(mesh, n, seed):
    g, xf = normalize_to_grid(mesh)
    lo, hi = g.bbox()
    cams = synthesize_cameras((lo + hi) / 2, float(np.linalg.norm(hi - lo)), n, np.random.default_rng(seed))
    return [render_depth(g, c) for c in cams], xf, g


def test_identical_views_fuse_like_one():
    imgs, xf, _ = grid_views(table(), 1, seed=2)
    one = fuse_tsdf(imgs, xf)
    three = fuse_tsdf(imgs * 3, xf)
    assert np.allclose(one.data, three.data, atol=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_adding_views_never_forgets(seed):
    imgs, xf, _ = grid_views(lbracket(), 3, seed)
    known = fuse_tsdf(imgs[:1], xf).known > 0
    for k in (2, 3):
        more = fuse_tsdf(imgs[:k], xf).known > 0
        assert np.all(more[known])
        known = more


@pytest.mark.parametrize("mesh", [box(), table(), icosphere(2)], ids=["box", "table", "sphere"])
@pytest.mark.parametrize("views", [1, 8])
def test_surface_adjacent_voxels_are_near_zero(mesh, views):
    imgs, xf, g = grid_views(mesh, views, seed=5)
    vol = fuse_tsdf(imgs, xf)
    true = point_mesh_distance(voxel_centers().reshape(-1, 3), g)
    adjacent = (true <= 0.5 + 1e-6) & (vol.known.reshape(-1) > 0)
    assert adjacent.sum() > 100
    assert vol.abs_distance.reshape(-1)[adjacent].max() < 1.5


def test_values_stay_in_truncation_band():
    vol = scan_mesh(table(), 2, seed=1)
    assert vol.data.dtype == np.float32
    assert vol.abs_distance.min() >= 0.0 and vol.abs_distance.max() <= TRUNCATION
    assert set(np.unique(vol.known)) <= {0.0, 1.0}


def test_tsdf_round_trip(tmp_path):
    vol = scan_mesh(box(), 1, seed=0)
    back = read_tsdf(write_tsdf(vol, tmp_path / "v.tsdf"))
    assert np.array_equal(back.data, vol.data)
    assert np.allclose(back.transform.matrix(), vol.transform.matrix())
    assert back.truncation == vol.truncation


def test_read_tsdf_rejects_garbage(tmp_path):
    p = tmp_path / "bad.tsdf"
    p.write_bytes(b"nope" * 40)
    with pytest.raises(ValueError):
        read_tsdf(p)
