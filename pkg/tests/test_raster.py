import numpy as np
import pytest

from dualuv.camera import PinholeCamera, look_at
from dualuv.mesh import TriMesh, build_shell, icosphere, quad_plane, sample_surface_uniform
from dualuv.raster import distance_transform, point_visibility, rasterize, shell_mask, silhouette

from oracles import brute_edt, pixel_ray_depth, raycast_visible, sphere_silhouette_radius


def tilted_triangle(flip=False):
    v = np.array([[-0.8, -0.6, 0.2], [0.9, -0.5, -0.3], [0.1, 0.8, 0.1]])
    f = np.array([[0, 2, 1]]) if flip else np.array([[0, 1, 2]])
    return TriMesh(v, f)


def test_triangle_depth_matches_ray_plane_oracle(front_camera):
    m = tilted_triangle()
    db = rasterize(m, front_camera)
    assert db.coverage.sum() > 100
    tri_cam = front_camera.to_camera(m.vertices)
    rows, cols = np.nonzero(db.coverage)
    for i, j in zip(rows, cols):
        z = pixel_ray_depth(front_camera, j + 0.5, i + 0.5, tri_cam)
        assert z is not None
        assert abs(db.depth[i, j] - z) <= 1e-6
    # every pixel whose center ray hits the triangle is covered
    for i in range(0, 64, 3):
        for j in range(0, 64, 3):
            z = pixel_ray_depth(front_camera, j + 0.5, i + 0.5, tri_cam)
            if z is not None:
                assert db.coverage[i, j]


def test_reversed_winding_is_culled(front_camera):
    assert rasterize(tilted_triangle(flip=True), front_camera).coverage.sum() == 0
    assert rasterize(tilted_triangle(flip=True), front_camera, cull_backfaces=False).coverage.sum() > 0


def test_stacked_quads_keep_nearer_depth(front_camera):
    far = quad_plane(1.0, center=(0, 0, -0.5))
    near = quad_plane(0.6, center=(0, 0, 0.5))
    verts = np.vstack([far.vertices, near.vertices])
    faces = np.vstack([far.faces, near.faces + far.n_vertices])
    m = TriMesh(verts, faces)
    db = rasterize(m, front_camera)
    only_far = rasterize(far, front_camera)
    near_cov = rasterize(near, front_camera).coverage
    assert np.allclose(db.depth[near_cov], 2.5)
    assert np.allclose(db.depth[only_far.coverage & ~near_cov], 3.5)


def test_triangle_crossing_camera_plane_is_dropped():
    cam = PinholeCamera(50, 50, 32, 32, 64, 64)
    m = TriMesh(np.array([[-1, -1, -1.0], [1, -1, 2.0], [0, 1, 2.0]]), np.array([[0, 1, 2]]))
    db = rasterize(m, cam, cull_backfaces=False)
    assert db.coverage.sum() == 0


def test_pole_visibility(front_camera):
    m = icosphere(3)
    db = rasterize(m, front_camera)
    near_pole = np.array([[0.0, 0.0, 1.0]])
    far_pole = np.array([[0.0, 0.0, -1.0]])
    vis, _ = point_visibility(np.vstack([near_pole, far_pole]) * 0.999, db, front_camera)
    assert vis.tolist() == [True, False]


def test_visibility_matches_raycast_on_sphere(front_camera):
    m = icosphere(3)
    s = sample_surface_uniform(m, 400, 11)
    pts = s.positions(m)
    vis, _ = point_visibility(pts, rasterize(m, front_camera), front_camera, face_ids=s.face_ids)
    oracle = raycast_visible(pts, s.face_ids, m, front_camera)
    assert np.mean(vis == oracle) >= 0.995


def test_depth_buffer_idempotent(front_camera):
    m = icosphere(2)
    a = rasterize(m, front_camera)
    b = rasterize(m, front_camera)
    assert a.depth.tobytes() == b.depth.tobytes()
    assert a.face.tobytes() == b.face.tobytes()
    cov = a.coverage
    assert np.all(np.isfinite(a.depth[cov]) & (a.depth[cov] > 0))
    assert np.all(np.isinf(a.depth[~cov]))


def test_silhouette_empty_and_definition(front_camera):
    empty = TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))
    assert not silhouette(empty, front_camera).any()
    m = icosphere(2)
    assert np.array_equal(silhouette(m, front_camera), rasterize(m, front_camera).coverage)


def test_silhouette_disk_radius():
    R, t = look_at([0, 0, 10.0], [0, 0, 0])
    cam = PinholeCamera(1000.0, 1000.0, 128, 128, 256, 256, R, t)
    sil = silhouette(icosphere(4), cam)
    r_meas = np.sqrt(sil.sum() / np.pi)
    assert abs(r_meas - sphere_silhouette_radius(1000.0, 1.0, 10.0)) <= 1.0
    assert abs(r_meas - 1000.0 * 1.0 / 10.0) <= 1.0


def test_silhouette_resolution_consistency():
    m = icosphere(3)
    fracs = []
    for w in (128, 256):
        R, t = look_at([0, 0, 4.0], [0, 0, 0])
        cam = PinholeCamera(w, w, w / 2, w / 2, w, w, R, t)
        fracs.append(silhouette(m, cam).mean())
    assert abs(fracs[0] - fracs[1]) / fracs[1] < 0.01


def test_shell_mask_zero_delta(front_camera):
    m = icosphere(2)
    assert not shell_mask(m, build_shell(m, 0.0), front_camera).pixels.any()


def test_shell_mask_disjoint_and_nested(front_camera):
    m = icosphere(3)
    sh = build_shell(m, 0.1)
    ms = shell_mask(m, sh, front_camera).pixels
    base = silhouette(m, front_camera)
    outer = silhouette(sh.mesh, front_camera)
    assert not np.any(ms & base)
    assert np.array_equal(ms | base, outer | base)
    assert ms.any()


def test_distance_transform_examples():
    full = np.ones((5, 6), dtype=bool)
    assert np.all(distance_transform(full).distance == 0)
    m = np.zeros((10, 10), dtype=bool)
    m[0, 0] = True
    assert distance_transform(m).distance[3, 4] == 5.0
    empty = distance_transform(np.zeros((4, 4), dtype=bool))
    assert empty.empty and np.all(np.isinf(empty.distance))
    with pytest.raises(ValueError):
        distance_transform(np.zeros((0, 0), dtype=bool))


@pytest.mark.parametrize("seed", range(4))
def test_distance_transform_brute_force(seed):
    gen = np.random.default_rng(seed)
    mask = gen.random((64, 64)) < [0.002, 0.01, 0.05, 0.3][seed]
    mask[gen.integers(64), gen.integers(64)] = True
    d = distance_transform(mask).distance
    assert np.array_equal(d, brute_edt(mask))
    # 1-Lipschitz along rows and columns; diagonal steps move sqrt(2)
    assert np.all(np.abs(np.diff(d, axis=0)) <= 1.0 + 1e-12)
    assert np.all(np.abs(np.diff(d, axis=1)) <= 1.0 + 1e-12)
    assert np.all(np.abs(d[1:, 1:] - d[:-1, :-1]) <= np.sqrt(2) + 1e-12)
