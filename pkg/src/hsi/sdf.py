"""Dense signed distance fields over scene meshes.

Unsigned distances are exact closest-point distances at voxel centroids.
Signs come from ray-casting parity along the three grid axes; voxels where
the three rays disagree (open meshes, degenerate hits) fall back to the
angle-weighted pseudo-normal test. Positive is free space, negative is
inside geometry.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .geometry import Bvh, MeshError, SceneMesh, TriMesh

_MAGIC = b"SDF1"
# Deterministic sub-cell offsets that push ray columns off edges/vertices.
_JITTER = (2.6180339887e-4, 1.4142135624e-4)


class SdfError(ValueError):
    pass


@dataclass
class SdfGrid:
    origin: np.ndarray  # (3,) grid corner (not first centroid)
    cell_size: float
    dims: np.ndarray  # (3,) voxel counts
    values: np.ndarray  # (nx, ny, nz) float32, signed meters
    padding: float = 0.0  # free space added around the scene bbox (not serialized)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.dims = np.asarray(self.dims, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float32)

    def centroids_axis(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.cell_size

    @property
    def interior_min(self) -> np.ndarray:
        """First voxel centroid; trilinear samples clamp to the centroid hull."""
        return self.origin + 0.5 * self.cell_size

    @property
    def interior_max(self) -> np.ndarray:
        return self.origin + (self.dims - 0.5) * self.cell_size

    def _locate(self, points: np.ndarray):
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        clipped = np.clip(p, self.interior_min, self.interior_max)
        outside = p - clipped
        u = (clipped - self.origin) / self.cell_size - 0.5
        i0 = np.floor(u).astype(np.int64)
        i0 = np.clip(i0, 0, self.dims - 2)
        frac = u - i0
        return p, clipped, outside, i0, frac

    def _corners(self, i0: np.ndarray) -> np.ndarray:
        """(N, 2, 2, 2) cell corner values as float64."""
        x, y, z = i0[:, 0], i0[:, 1], i0[:, 2]
        v = self.values
        c = np.empty((i0.shape[0], 2, 2, 2))
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    c[:, dx, dy, dz] = v[x + dx, y + dy, z + dz]
        return c

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear signed distance; outside the centroid hull the boundary
        value plus the Euclidean distance to the hull is returned."""
        p, clipped, outside, i0, frac = self._locate(points)
        c = self._corners(i0)
        fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
        c00 = c[:, 0, 0, 0] * (1 - fx) + c[:, 1, 0, 0] * fx
        c01 = c[:, 0, 0, 1] * (1 - fx) + c[:, 1, 0, 1] * fx
        c10 = c[:, 0, 1, 0] * (1 - fx) + c[:, 1, 1, 0] * fx
        c11 = c[:, 0, 1, 1] * (1 - fx) + c[:, 1, 1, 1] * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        val = c0 * (1 - fz) + c1 * fz
        out_d = np.linalg.norm(outside, axis=1)
        return val + out_d

    def sample_gradient(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact spatial gradient of the trilinear interpolant.

        Returns (gradients, clamped) where `clamped` marks points outside the
        grid interior; those get the boundary-clamped gradient plus the
        gradient of the outside-distance term.
        """
        p, clipped, outside, i0, frac = self._locate(points)
        c = self._corners(i0)
        fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
        gx = np.empty(len(p))
        gy = np.empty(len(p))
        gz = np.empty(len(p))
        # d/dx: difference along x, interpolate y, z
        dx = c[:, 1] - c[:, 0]  # (N, 2, 2)
        gx = ((dx[:, 0, 0] * (1 - fy) + dx[:, 1, 0] * fy) * (1 - fz)
              + (dx[:, 0, 1] * (1 - fy) + dx[:, 1, 1] * fy) * fz) / self.cell_size
        dy = c[:, :, 1] - c[:, :, 0]
        gy = ((dy[:, 0, 0] * (1 - fx) + dy[:, 1, 0] * fx) * (1 - fz)
              + (dy[:, 0, 1] * (1 - fx) + dy[:, 1, 1] * fx) * fz) / self.cell_size
        dz = c[:, :, :, 1] - c[:, :, :, 0]
        gz = ((dz[:, 0, 0] * (1 - fx) + dz[:, 1, 0] * fx) * (1 - fy)
              + (dz[:, 0, 1] * (1 - fx) + dz[:, 1, 1] * fx) * fy) / self.cell_size
        grad = np.stack([gx, gy, gz], axis=1)
        out_d = np.linalg.norm(outside, axis=1)
        clamped = out_d > 0.0
        if clamped.any():
            # Clamped axes contribute nothing through the interpolant; the
            # outside term adds the unit direction away from the hull.
            mask = (outside != 0.0)
            grad[mask] = 0.0
            grad[clamped] += outside[clamped] / out_d[clamped, None]
        return grad, clamped


# ---------------------------------------------------------------------------
# construction


def _angle_weighted_normals(mesh: TriMesh):
    """Per-face, per-edge and per-vertex pseudo-normals (Baerentzen-Aanaes)."""
    v = mesh.vertices
    f = mesh.faces
    e0 = v[f[:, 1]] - v[f[:, 0]]
    e1 = v[f[:, 2]] - v[f[:, 0]]
    fn = np.cross(e0, e1)
    norm = np.linalg.norm(fn, axis=1)
    norm[norm == 0] = 1.0
    fn = fn / norm[:, None]

    vn = np.zeros_like(v)
    edge_n: dict[tuple[int, int], np.ndarray] = {}
    for fi in range(len(f)):
        a, b, c = f[fi]
        pa, pb, pc = v[a], v[b], v[c]
        for corner, p0, p1, p2 in ((a, pa, pb, pc), (b, pb, pc, pa), (c, pc, pa, pb)):
            u1 = p1 - p0
            u2 = p2 - p0
            cosang = np.clip(u1 @ u2 / max(np.linalg.norm(u1) * np.linalg.norm(u2), 1e-30), -1, 1)
            vn[corner] += np.arccos(cosang) * fn[fi]
        for ea, eb in ((a, b), (b, c), (c, a)):
            key = (min(ea, eb), max(ea, eb))
            edge_n[key] = edge_n.get(key, 0.0) + fn[fi]
    return fn, edge_n, vn


def _pseudo_normal_sign(scene_mesh: TriMesh, bvh: Bvh, points: np.ndarray,
                        faces: np.ndarray, surf: np.ndarray) -> np.ndarray:
    fn, edge_n, vn = _angle_weighted_normals(scene_mesh)
    signs = np.ones(len(points))
    eps = 1e-9
    for i in range(len(points)):
        fi = int(faces[i])
        tri = scene_mesh.faces[fi]
        a, b, c = scene_mesh.vertices[tri]
        n = np.cross(b - a, c - a)
        nn = n @ n
        if nn < 1e-30:
            continue
        w0 = float(np.cross(b - surf[i], c - surf[i]) @ n) / nn
        w1 = float(np.cross(c - surf[i], a - surf[i]) @ n) / nn
        w = np.array([w0, w1, 1.0 - w0 - w1])
        zero = w < eps
        if zero.sum() == 0:
            normal = fn[fi]
        elif zero.sum() == 1:
            k = int(np.argmax(zero))  # edge opposite vertex k
            ea, eb = [tri[j] for j in range(3) if j != k]
            normal = edge_n.get((min(ea, eb), max(ea, eb)), fn[fi])
        else:
            k = int(np.argmax(~zero))
            normal = vn[tri[k]]
        if float(np.dot(points[i] - surf[i], np.asarray(normal))) < 0.0:
            signs[i] = -1.0
    return signs


def build_sdf(scene: SceneMesh, resolution: int = 128, padding: float | None = None,
              max_voxels: int = 2 * 512 ** 3) -> SdfGrid:
    """Signed distance grid over the scene's padded bounding box.

    `resolution` is the voxel count along the longest padded axis; cells are
    cubic. `padding` is in meters and defaults to 10% of the bbox diagonal.
    """
    mesh = scene.mesh
    if mesh.n_faces == 0:
        raise SdfError("scene mesh is empty")
    if resolution < 8:
        raise SdfError(f"resolution must be >= 8, got {resolution}")

    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if padding is None:
        padding = 0.1 * diag
    lo = lo - padding
    hi = hi + padding
    extent = hi - lo
    cell = np.float32(extent.max() / resolution)
    while float(cell) * resolution < extent.max():
        cell = np.nextafter(cell, np.float32(np.inf))
    cell = float(cell)
    dims = np.maximum(np.ceil(extent / cell - 1e-9).astype(np.int64), 8)
    if int(np.prod(dims)) > max_voxels:
        raise SdfError(f"grid of {dims.tolist()} voxels exceeds the {max_voxels}-voxel cap")
    center = (lo + hi) / 2.0
    origin = np.asarray(np.float32(center - dims * cell / 2.0), dtype=np.float64)

    xs = origin[0] + (np.arange(dims[0]) + 0.5) * cell
    ys = origin[1] + (np.arange(dims[1]) + 0.5) * cell
    zs = origin[2] + (np.arange(dims[2]) + 0.5) * cell

    # exact unsigned distances at centroids
    bvh = Bvh(mesh)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    centroids = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    dist, faces, surf = bvh.query(centroids)

    # parity along each axis; kernel casts along its last coordinate
    tris = mesh.triangle_array()
    axes_coords = (xs, ys, zs)
    votes = np.zeros((int(dims[0]), int(dims[1]), int(dims[2])), dtype=np.int8)
    unanimous_ref = None
    parities = []
    for axis in range(3):
        c1, c2 = (axis + 1) % 3, (axis + 2) % 3
        perm = (c1, c2, axis)
        tp = np.ascontiguousarray(tris[:, :, perm])
        a1 = axes_coords[c1] + _JITTER[0] * cell
        a2 = axes_coords[c2] + _JITTER[1] * cell
        out = np.empty((len(a1), len(a2), len(axes_coords[axis])), dtype=np.uint8)
        _kernels.column_parity(tp, a1, a2, axes_coords[axis], out)
        parities.append(np.transpose(out, np.argsort(perm)))
    votes = parities[0].astype(np.int8) + parities[1] + parities[2]
    inside = votes == 3
    disputed = (votes == 1) | (votes == 2)

    sign = np.where(inside, -1.0, 1.0).ravel()
    if disputed.any():
        idx = np.nonzero(disputed.ravel())[0]
        sign[idx] = _pseudo_normal_sign(mesh, bvh, centroids[idx], faces[idx], surf[idx])

    values = (sign * dist).reshape(dims).astype(np.float32)
    return SdfGrid(origin=origin, cell_size=cell, dims=dims, values=values, padding=float(padding))


# ---------------------------------------------------------------------------
# serialization: "SDF1" + 3*u32 dims + 3*f32 origin + f32 cell + f32 values
# in x-fastest order, all little-endian


def save_sdf(grid: SdfGrid, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<3I", *[int(d) for d in grid.dims]))
        fh.write(struct.pack("<3f", *[float(o) for o in grid.origin]))
        fh.write(struct.pack("<f", float(grid.cell_size)))
        fh.write(np.asarray(grid.values, dtype="<f4").ravel(order="F").tobytes())


def load_sdf(path) -> SdfGrid:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise SdfError(f"{path}: bad magic {magic!r}")
        dims = struct.unpack("<3I", fh.read(12))
        origin = struct.unpack("<3f", fh.read(12))
        (cell,) = struct.unpack("<f", fh.read(4))
        n = dims[0] * dims[1] * dims[2]
        raw = fh.read(4 * n)
        if len(raw) != 4 * n:
            raise SdfError(f"{path}: truncated value block")
        values = np.frombuffer(raw, dtype="<f4").reshape(dims, order="F")
    return SdfGrid(origin=np.asarray(origin, dtype=np.float64), cell_size=float(cell),
                   dims=np.asarray(dims, dtype=np.int64), values=np.ascontiguousarray(values))
