import numpy as np
import pytest

from hsi import geometry as geo
from hsi.synthgen import icosphere

from conftest import random_trimesh


def tri():
    return geo.TriMesh(
        np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float),
        np.array([[0, 1, 2]], dtype=np.int32),
    )


class TestMeshIO:
    def test_minimal_obj(self, tmp_path):
        p = tmp_path / "t.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        m = geo.load_mesh(p)
        assert m.n_vertices == 3 and m.n_faces == 1

    def test_obj_out_of_range_face(self, tmp_path):
        p = tmp_path / "t.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 10\n")
        with pytest.raises(geo.MeshError, match="face 0"):
            geo.load_mesh(p)

    def test_degenerate_face_rejected(self, tmp_path):
        p = tmp_path / "t.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 3\n")
        with pytest.raises(geo.MeshError, match="face 0"):
            geo.load_mesh(p)

    def test_obj_roundtrip_1000_vertices(self, tmp_path):
        rng = np.random.default_rng(0)
        m = random_trimesh(rng, 1000, 1500)
        p = tmp_path / "m.obj"
        geo.save_mesh(m, p)
        m2 = geo.load_mesh(p)
        assert m2.n_vertices == m.n_vertices
        assert np.abs(m2.vertices - m.vertices).max() < 1e-6
        assert np.array_equal(m2.faces, m.faces)

    def test_ply_roundtrip_binary(self, tmp_path):
        rng = np.random.default_rng(1)
        m = random_trimesh(rng, 200, 300)
        p = tmp_path / "m.ply"
        geo.save_mesh(m, p)
        m2 = geo.load_mesh(p)
        assert np.abs(m2.vertices - m.vertices).max() < 1e-6
        assert np.array_equal(m2.faces, m.faces)

    def test_scene_ply_labels_and_classes(self, tmp_path):
        rng = np.random.default_rng(2)
        m = random_trimesh(rng, 50, 60)
        labels = rng.integers(0, 3, size=50)
        scene = geo.SceneMesh(m, labels, ["floor", "wall", "chair"])
        p = tmp_path / "s.ply"
        geo.save_scene(scene, p)
        s2 = geo.load_scene(p)
        assert np.array_equal(s2.labels, labels)
        assert s2.class_names == ["floor", "wall", "chair"]

    def test_ply_ascii(self, tmp_path):
        p = tmp_path / "a.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 3\n"
            "property float x\nproperty float y\nproperty float z\n"
            "element face 1\nproperty list uchar int vertex_indices\n"
            "end_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
        )
        m = geo.load_mesh(p)
        assert m.n_vertices == 3 and m.n_faces == 1


class TestClosestPoint:
    def test_orthogonal_projection(self):
        bvh = geo.build_bvh(tri())
        r = geo.closest_point(bvh, [0.25, 0.25, 1.0])
        assert np.allclose(r.point, [0.25, 0.25, 0.0])
        assert r.distance == pytest.approx(1.0)
        assert r.barycentric.min() >= 0
        assert r.barycentric.sum() == pytest.approx(1.0, abs=1e-6)

    def test_nearest_vertex(self):
        bvh = geo.build_bvh(tri())
        r = geo.closest_point(bvh, [2.0, 0.0, 0.0])
        assert np.allclose(r.point, [1, 0, 0])
        assert r.distance == pytest.approx(1.0)

    def test_distance_consistent_with_point(self):
        rng = np.random.default_rng(3)
        m = random_trimesh(rng, 60, 100)
        bvh = geo.build_bvh(m)
        q = rng.normal(size=(50, 3)) * 2
        d, f, p = bvh.query(q)
        assert np.abs(d - np.linalg.norm(q - p, axis=1)).max() < 1e-9

    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        for trial in range(5):
            m = random_trimesh(rng, 80, 200)
            bvh = geo.build_bvh(m)
            q = rng.normal(size=(100, 3)) * 1.5
            d, f, p = bvh.query(q)
            for i in range(len(q)):
                rb = geo.closest_point_brute(m, q[i])
                assert abs(rb.distance - d[i]) <= 1e-9
                assert rb.face_index == f[i]

    def test_lipschitz_in_query(self):
        rng = np.random.default_rng(5)
        m = random_trimesh(rng, 80, 200)
        bvh = geo.build_bvh(m)
        a = rng.normal(size=(200, 3)) * 2
        b = a + rng.normal(size=(200, 3)) * 0.1
        da, _, _ = bvh.query(a)
        db, _, _ = bvh.query(b)
        assert np.all(np.abs(da - db) <= np.linalg.norm(a - b, axis=1) + 1e-12)

    def test_empty_mesh_rejected(self):
        m = geo.TriMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=np.int32))
        with pytest.raises(geo.MeshError):
            geo.build_bvh(m)


class TestRigid:
    def test_identity(self):
        m = tri()
        m2 = geo.apply_rigid(m, [0, 0, 0], 0.0)
        assert np.array_equal(m2.vertices, m.vertices)

    def test_half_turn(self):
        m2 = geo.apply_rigid(tri(), [0, 0, 0], np.pi)
        assert np.abs(m2.vertices[1] - np.array([-1, 0, 0])).max() < 1e-9

    def test_composition(self):
        m = tri()
        a = geo.apply_rigid(geo.apply_rigid(m, [1, 2, 0], 0.3), [0, -1, 1], 0.5)
        r1 = geo.yaw_matrix(0.3)
        r2 = geo.yaw_matrix(0.5)
        composed = m.vertices @ (r2 @ r1).T + (r2 @ np.array([1, 2, 0.0]) + np.array([0, -1, 1.0]))
        assert np.abs(a.vertices - composed).max() < 1e-9

    def test_preserves_pairwise_distances(self):
        rng = np.random.default_rng(6)
        m = random_trimesh(rng, 50, 80)
        m2 = geo.apply_rigid(m, rng.normal(size=3), 1.1)
        d1 = np.linalg.norm(m.vertices[:, None] - m.vertices[None], axis=2)
        d2 = np.linalg.norm(m2.vertices[:, None] - m2.vertices[None], axis=2)
        assert np.abs(d1 - d2).max() < 1e-7

    def test_up_axis_configurable(self):
        try:
            geo.set_up_axis("y")
            m2 = geo.apply_rigid(tri(), [0, 0, 0], np.pi / 2)
            # +x rotates to -z about +y
            assert np.abs(m2.vertices[1] - np.array([0, 0, -1])).max() < 1e-9
        finally:
            geo.set_up_axis("z")


class TestEuler:
    def test_roundtrip_random_rotations(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            aa = rng.normal(size=3)
            r = geo.axis_angle_to_matrix(aa)
            a, b, c = geo.euler_xyz_from_matrix(r)
            r2 = geo.matrix_from_euler_xyz(a, b, c)
            assert np.abs(r - r2).max() < 1e-9

    def test_wrap_angle(self):
        assert geo.wrap_angle(3 * np.pi) == pytest.approx(np.pi)
        assert geo.wrap_angle(-np.pi) == pytest.approx(np.pi)
        assert geo.wrap_angle(0.5) == pytest.approx(0.5)


class TestSkeleton:
    def test_weights_must_sum_to_one(self):
        joints = [geo.Joint("root", -1, np.zeros(3))]
        with pytest.raises(geo.MeshError):
            geo.Skeleton(joints, np.full((4, 1), 0.5))

    def test_identity_pose_is_identity(self):
        from hsi.synthgen import generate_body

        body = generate_body("stand")
        v = body.skeleton.skin(body.mesh.vertices)
        assert np.abs(v - body.mesh.vertices).max() < 1e-12
