import numpy as np
import pytest

from hsi.geometry import SceneMesh, TriMesh
from hsi.synthgen import icosphere


@pytest.fixture(scope="session")
def sphere_mesh() -> TriMesh:
    return icosphere(1.0, 4)


@pytest.fixture(scope="session")
def sphere_scene(sphere_mesh) -> SceneMesh:
    return SceneMesh(sphere_mesh, np.zeros(sphere_mesh.n_vertices, dtype=int), ["ball"])


def random_trimesh(rng: np.random.Generator, n_verts: int = 80, n_faces: int = 150) -> TriMesh:
    v = rng.normal(size=(n_verts, 3))
    f = rng.integers(0, n_verts, size=(n_faces, 3)).astype(np.int32)
    ok = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    return TriMesh(v, f[ok])
