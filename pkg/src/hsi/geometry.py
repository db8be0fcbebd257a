"""Triangle meshes, rigid transforms, and exact closest-point queries.

Vertices are float64 in meters. The up axis defaults to +Z and can be
changed globally with :func:`set_up_axis`; only yaw rotations and
height-dependent logic consult it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels

_UP_AXIS = 2


class MeshError(ValueError):
    """Malformed mesh data or file."""


def set_up_axis(axis: str) -> None:
    global _UP_AXIS
    try:
        _UP_AXIS = {"x": 0, "y": 1, "z": 2}[axis.lower()]
    except KeyError:
        raise ValueError(f"up axis must be x, y or z, got {axis!r}") from None


def up_axis() -> int:
    return _UP_AXIS


def up_vector() -> np.ndarray:
    v = np.zeros(3)
    v[_UP_AXIS] = 1.0
    return v


# ---------------------------------------------------------------------------
# rotations


def rot_about_axis(axis: int, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    i = (axis + 1) % 3
    j = (axis + 2) % 3
    r = np.eye(3)
    r[i, i] = c
    r[i, j] = -s
    r[j, i] = s
    r[j, j] = c
    return r


def rot_x(a: float) -> np.ndarray:
    return rot_about_axis(0, a)


def rot_y(a: float) -> np.ndarray:
    return rot_about_axis(1, a)


def rot_z(a: float) -> np.ndarray:
    return rot_about_axis(2, a)


def yaw_matrix(yaw: float) -> np.ndarray:
    """Rotation by `yaw` about the global up axis."""
    return rot_about_axis(_UP_AXIS, yaw)


def axis_angle_to_matrix(aa: np.ndarray) -> np.ndarray:
    """Rodrigues formula; aa is axis * angle."""
    aa = np.asarray(aa, dtype=float)
    theta = np.linalg.norm(aa)
    if theta < 1e-12:
        return np.eye(3)
    k = aa / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def euler_xyz_from_matrix(r: np.ndarray) -> tuple[float, float, float]:
    """Decompose r as Rx(a) @ Ry(b) @ Rz(c) (intrinsic X-Y-Z).

    At gimbal lock (|r02| ~ 1) the full residual rotation is assigned to
    the X angle so a canonical body keeps its ground pitch.
    """
    r = np.asarray(r, dtype=float)
    sb = float(np.clip(r[0, 2], -1.0, 1.0))
    if abs(sb) > 1.0 - 1e-7:
        a = float(np.arctan2(r[1, 0], r[1, 1]))
        b = float(np.arcsin(sb))
        c = 0.0
    else:
        a = float(np.arctan2(-r[1, 2], r[2, 2]))
        b = float(np.arcsin(sb))
        c = float(np.arctan2(-r[0, 1], r[0, 0]))
    return a, b, c


def matrix_from_euler_xyz(a: float, b: float, c: float) -> np.ndarray:
    return rot_x(a) @ rot_y(b) @ rot_z(c)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]; exact passthrough for values already in range."""
    if -np.pi < a <= np.pi:
        return float(a)
    w = float(np.arctan2(np.sin(a), np.cos(a)))
    if w == -np.pi:
        w = np.pi
    return w


# ---------------------------------------------------------------------------
# mesh types


@dataclass
class TriMesh:
    vertices: np.ndarray  # (V, 3) float64, meters
    faces: np.ndarray  # (F, 3) int32
    normals: np.ndarray | None = None  # (V, 3) optional

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int32)
        if self.faces.size and self.faces.ndim != 2:
            raise MeshError("faces must be an (F, 3) array")

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    def triangle_array(self) -> np.ndarray:
        """(F, 3, 3) vertex coordinates per face."""
        return np.ascontiguousarray(self.vertices[self.faces])

    def validate(self) -> None:
        f = self.faces
        if f.size == 0:
            return
        bad = np.nonzero((f < 0).any(axis=1) | (f >= self.n_vertices).any(axis=1))[0]
        if bad.size:
            raise MeshError(f"face {bad[0]} references vertex out of range (have {self.n_vertices} vertices)")
        degen = np.nonzero((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2]))[0]
        if degen.size:
            raise MeshError(f"face {degen[0]} is degenerate (repeated vertex index)")

    def copy(self) -> "TriMesh":
        return TriMesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.normals is None else self.normals.copy(),
        )


@dataclass
class SceneMesh:
    mesh: TriMesh
    labels: np.ndarray  # (V,) int, class id in [0, n_classes)
    class_names: list[str]

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.labels.shape[0] != self.mesh.n_vertices:
            raise MeshError("labels length must equal vertex count")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise MeshError("label out of class range")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass
class Joint:
    name: str
    parent: int  # -1 for the root
    rest: np.ndarray  # (3,) rest-pose position


@dataclass
class Skeleton:
    joints: list[Joint]
    weights: np.ndarray  # (V, J) skinning weights, rows sum to 1
    pose: np.ndarray = None  # (J, 3) per-joint axis-angle

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.pose is None:
            self.pose = np.zeros((len(self.joints), 3))
        self.pose = np.asarray(self.pose, dtype=np.float64)
        rows = self.weights.sum(axis=1)
        if self.weights.size and np.abs(rows - 1.0).max() > 1e-6:
            raise MeshError("skinning weights must sum to 1 per vertex")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def global_transforms(self, pose: np.ndarray | None = None) -> np.ndarray:
        """(J, 4, 4) joint-to-world transforms for the given pose."""
        pose = self.pose if pose is None else np.asarray(pose, dtype=np.float64)
        out = np.empty((self.n_joints, 4, 4))
        for j, joint in enumerate(self.joints):
            local = np.eye(4)
            local[:3, :3] = axis_angle_to_matrix(pose[j])
            if joint.parent < 0:
                local[:3, 3] = joint.rest
                out[j] = local
            else:
                local[:3, 3] = joint.rest - self.joints[joint.parent].rest
                out[j] = out[joint.parent] @ local
        return out

    def skin(self, rest_vertices: np.ndarray, pose: np.ndarray | None = None) -> np.ndarray:
        """Linear blend skinning of rest-pose vertices."""
        g = self.global_transforms(pose)
        v = np.asarray(rest_vertices, dtype=np.float64)
        out = np.zeros_like(v)
        for j, joint in enumerate(self.joints):
            w = self.weights[:, j]
            if not w.any():
                continue
            local = v - joint.rest
            out += w[:, None] * (local @ g[j, :3, :3].T + g[j, :3, 3])
        return out


@dataclass
class BodyMesh:
    """Fixed-topology body: rest mesh + skeleton pose + rigid root transform."""

    mesh: TriMesh  # rest-pose template
    skeleton: Skeleton | None = None
    root_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    topology: str = "external"

    def __post_init__(self):
        self.root_rotation = np.asarray(self.root_rotation, dtype=np.float64)
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64)

    def posed_vertices(self, pose_delta: np.ndarray | None = None) -> np.ndarray:
        """World-space vertices after skinning and the root transform."""
        if self.skeleton is None:
            v = self.mesh.vertices
            if pose_delta is not None and np.any(pose_delta):
                raise MeshError("pose deltas require a skeleton")
        else:
            pose = self.skeleton.pose
            if pose_delta is not None:
                pose = pose + np.asarray(pose_delta, dtype=np.float64).reshape(pose.shape)
            v = self.skeleton.skin(self.mesh.vertices, pose)
        return v @ self.root_rotation.T + self.root_translation

    def with_root(self, rotation: np.ndarray, translation: np.ndarray) -> "BodyMesh":
        return BodyMesh(self.mesh, self.skeleton, np.asarray(rotation, float),
                        np.asarray(translation, float), self.topology)


@dataclass
class ClosestPointResult:
    point: np.ndarray  # (3,) on the surface
    distance: float
    face_index: int
    barycentric: np.ndarray  # (3,) non-negative, sums to 1


# ---------------------------------------------------------------------------
# rigid transform


def apply_rigid(mesh: TriMesh, translation, yaw: float) -> TriMesh:
    """v' = R_up(yaw) @ v + translation, faces unchanged."""
    t = np.asarray(translation, dtype=np.float64)
    if not (np.all(np.isfinite(t)) and np.isfinite(yaw)):
        raise ValueError("rigid transform parameters must be finite")
    r = yaw_matrix(yaw)
    normals = None if mesh.normals is None else mesh.normals @ r.T
    return TriMesh(mesh.vertices @ r.T + t, mesh.faces.copy(), normals)


# ---------------------------------------------------------------------------
# BVH


class Bvh:
    """Static binary BVH over triangles, exact closest-point queries.

    Immutable after construction; queries are read-only and thread safe.
    """

    LEAF_SIZE = 4

    def __init__(self, mesh: TriMesh):
        if mesh.n_faces == 0:
            raise MeshError("cannot build a proximity structure over an empty mesh")
        mesh.validate()
        self.mesh = mesh
        self.tris = mesh.triangle_array()
        n = self.tris.shape[0]
        order = np.arange(n, dtype=np.int64)
        cent = self.tris.mean(axis=1)

        bmin, bmax, left, right, start, count = [], [], [], [], [], []

        def build(lo: int, hi: int) -> int:
            node = len(bmin)
            sub = order[lo:hi]
            t = self.tris[sub]
            bmin.append(t.min(axis=(0, 1)))
            bmax.append(t.max(axis=(0, 1)))
            left.append(-1)
            right.append(-1)
            start.append(lo)
            count.append(hi - lo)
            if hi - lo > self.LEAF_SIZE:
                c = cent[sub]
                axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
                # Stable sort on (coordinate, original index) keeps builds deterministic.
                perm = np.argsort(c[:, axis], kind="stable")
                order[lo:hi] = sub[perm]
                mid = (lo + hi) // 2
                l = build(lo, mid)
                r = build(mid, hi)
                left[node] = l
                right[node] = r
            return node

        build(0, n)
        self.node_min = np.ascontiguousarray(bmin, dtype=np.float64)
        self.node_max = np.ascontiguousarray(bmax, dtype=np.float64)
        self.node_left = np.ascontiguousarray(left, dtype=np.int64)
        self.node_right = np.ascontiguousarray(right, dtype=np.int64)
        self.leaf_start = np.ascontiguousarray(start, dtype=np.int64)
        self.leaf_count = np.ascontiguousarray(count, dtype=np.int64)
        self.tri_order = np.ascontiguousarray(order)

    def query(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batch closest-point query: (distances, face indices, surface points)."""
        q = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        n = q.shape[0]
        out_d = np.empty(n)
        out_f = np.empty(n, dtype=np.int64)
        out_p = np.empty((n, 3))
        _kernels.bvh_closest_many(
            self.node_min, self.node_max, self.node_left, self.node_right,
            self.leaf_start, self.leaf_count, self.tri_order, self.tris,
            q, out_d, out_f, out_p,
        )
        return out_d, out_f, out_p


def build_bvh(mesh: TriMesh) -> Bvh:
    return Bvh(mesh)


def barycentric_on_face(mesh: TriMesh, face: int, point: np.ndarray) -> np.ndarray:
    """Barycentric weights of an on-surface point; clipped and renormalized."""
    a, b, c = mesh.vertices[mesh.faces[face]]
    n = np.cross(b - a, c - a)
    nn = float(n @ n)
    if nn < 1e-30:
        return np.array([1.0, 0.0, 0.0])
    w0 = float(np.cross(b - point, c - point) @ n) / nn
    w1 = float(np.cross(c - point, a - point) @ n) / nn
    w = np.array([w0, w1, 1.0 - w0 - w1])
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def closest_point(structure: Bvh, query) -> ClosestPointResult:
    d, f, p = structure.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    face = int(f[0])
    return ClosestPointResult(
        point=p[0],
        distance=float(d[0]),
        face_index=face,
        barycentric=barycentric_on_face(structure.mesh, face, p[0]),
    )


def closest_point_brute(mesh: TriMesh, query) -> ClosestPointResult:
    """Exhaustive per-triangle search; the oracle the BVH must match."""
    q = np.asarray(query, dtype=np.float64)
    d2, f, px, py, pz = _kernels.brute_closest(mesh.triangle_array(), q[0], q[1], q[2])
    p = np.array([px, py, pz])
    return ClosestPointResult(
        point=p,
        distance=float(np.sqrt(d2)),
        face_index=int(f),
        barycentric=barycentric_on_face(mesh, int(f), p),
    )


# ---------------------------------------------------------------------------
# OBJ


def _load_obj(path: Path) -> TriMesh:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}: line {ln}: vertex needs 3 coordinates")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise MeshError(f"{path}: line {ln}: face needs at least 3 vertices")
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    mesh = TriMesh(
        np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int32).reshape(-1, 3),
    )
    mesh.validate()
    return mesh


def _save_obj(mesh: TriMesh, path: Path) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# PLY (ascii / binary little endian; positions, optional normals,
# optional integer per-vertex property "label")

_PLY_TYPES = {
    "char": "i1", "uchar": "u1", "int8": "i1", "uint8": "u1",
    "short": "i2", "ushort": "u2", "int16": "i2", "uint16": "u2",
    "int": "i4", "uint": "u4", "int32": "i4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _load_ply(path: Path) -> tuple[TriMesh, np.ndarray | None, list[str] | None]:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise MeshError(f"{path}: not a PLY file")
        fmt = None
        comments: list[str] = []
        elements: list[tuple[str, int, list[tuple[str, str, str | None]]]] = []
        cur = None
        while True:
            line = fh.readline()
            if not line:
                raise MeshError(f"{path}: unterminated PLY header")
            tok = line.decode("ascii", "replace").split()
            if not tok:
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "comment":
                comments.append(" ".join(tok[1:]))
            elif tok[0] == "element":
                cur = (tok[1], int(tok[2]), [])
                elements.append(cur)
            elif tok[0] == "property":
                if cur is None:
                    raise MeshError(f"{path}: property before element")
                if tok[1] == "list":
                    cur[2].append((tok[4], tok[3], tok[2]))
                else:
                    cur[2].append((tok[2], tok[1], None))
            elif tok[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise MeshError(f"{path}: unsupported PLY format {fmt}")

        verts = norms = labels = None
        faces: list[list[int]] = []
        for name, n, props in elements:
            if fmt == "ascii":
                rows = [fh.readline().split() for _ in range(n)]
            if name == "vertex":
                scalar = [(p, t) for p, t, lc in props if lc is None]
                if any(lc is not None for _, _, lc in props):
                    raise MeshError(f"{path}: list property on vertex element not supported")
                if fmt == "ascii":
                    data = np.array([[float(x) for x in row] for row in rows], dtype=np.float64)
                    cols = {p: data[:, i] for i, (p, t) in enumerate(scalar)}
                else:
                    dt = np.dtype([(p, "<" + _PLY_TYPES[t]) for p, t in scalar])
                    raw = fh.read(dt.itemsize * n)
                    if len(raw) != dt.itemsize * n:
                        raise MeshError(f"{path}: truncated vertex data")
                    rec = np.frombuffer(raw, dtype=dt)
                    cols = {p: rec[p].astype(np.float64) for p, t in scalar}
                try:
                    verts = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
                except KeyError:
                    raise MeshError(f"{path}: vertex element lacks x/y/z") from None
                if {"nx", "ny", "nz"} <= cols.keys():
                    norms = np.stack([cols["nx"], cols["ny"], cols["nz"]], axis=1)
                if "label" in cols:
                    labels = cols["label"].astype(np.int64)
            elif name == "face":
                if fmt == "ascii":
                    for row in rows:
                        cnt = int(row[0])
                        idx = [int(x) for x in row[1:1 + cnt]]
                        for k in range(1, cnt - 1):
                            faces.append([idx[0], idx[k], idx[k + 1]])
                else:
                    (pname, itype, ctype), = [p for p in props if p[2] is not None]
                    cdt = np.dtype("<" + _PLY_TYPES[ctype])
                    idt = np.dtype("<" + _PLY_TYPES[itype])
                    for _ in range(n):
                        cnt = int(np.frombuffer(fh.read(cdt.itemsize), dtype=cdt)[0])
                        idx = np.frombuffer(fh.read(idt.itemsize * cnt), dtype=idt).tolist()
                        for k in range(1, cnt - 1):
                            faces.append([idx[0], idx[k], idx[k + 1]])
            else:  # skip unknown element payloads
                if fmt != "ascii":
                    raise MeshError(f"{path}: unknown binary element {name}")

    if verts is None:
        raise MeshError(f"{path}: PLY without vertex element")
    mesh = TriMesh(verts, np.asarray(faces, dtype=np.int32).reshape(-1, 3), norms)
    mesh.validate()
    class_names = None
    for c in comments:
        if c.startswith("classes "):
            class_names = c[len("classes "):].split(",")
    return mesh, labels, class_names


def _save_ply(mesh: TriMesh, path: Path, labels: np.ndarray | None = None,
              class_names: list[str] | None = None) -> None:
    header = ["ply", "format binary_little_endian 1.0"]
    if class_names:
        header.append("comment classes " + ",".join(class_names))
    header.append(f"element vertex {mesh.n_vertices}")
    header += ["property float x", "property float y", "property float z"]
    if mesh.normals is not None:
        header += ["property float nx", "property float ny", "property float nz"]
    if labels is not None:
        header.append("property ushort label")
    header.append(f"element face {mesh.n_faces}")
    header.append("property list uchar uint vertex_indices")
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        cols = [mesh.vertices.astype("<f4")]
        if mesh.normals is not None:
            cols.append(mesh.normals.astype("<f4"))
        vdata = np.concatenate(cols, axis=1)
        if labels is not None:
            dt = np.dtype([("v", "<f4", vdata.shape[1]), ("l", "<u2")])
            rec = np.empty(mesh.n_vertices, dtype=dt)
            rec["v"] = vdata
            rec["l"] = labels.astype("<u2")
            fh.write(rec.tobytes())
        else:
            fh.write(vdata.tobytes())
        for f in mesh.faces:
            fh.write(struct.pack("<Buuu".replace("u", "I"), 3, int(f[0]), int(f[1]), int(f[2])))


def load_mesh(path, fmt: str | None = None) -> TriMesh:
    """Load an OBJ or PLY triangle mesh (format inferred from the suffix)."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt == "obj":
        return _load_obj(path)
    if fmt == "ply":
        return _load_ply(path)[0]
    raise MeshError(f"unsupported mesh format {fmt!r}")


def save_mesh(mesh: TriMesh, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt == "obj":
        _save_obj(mesh, path)
    elif fmt == "ply":
        _save_ply(mesh, path)
    else:
        raise MeshError(f"unsupported mesh format {fmt!r}")


def load_scene(path) -> SceneMesh:
    """Scene = PLY with per-vertex labels and a `classes` header comment."""
    mesh, labels, class_names = _load_ply(Path(path))
    if labels is None:
        raise MeshError(f"{path}: scene PLY lacks per-vertex 'label' property")
    if class_names is None:
        class_names = [f"class{i}" for i in range(int(labels.max()) + 1)]
    return SceneMesh(mesh, labels, class_names)


def save_scene(scene: SceneMesh, path) -> None:
    _save_ply(scene.mesh, Path(path), labels=scene.labels, class_names=scene.class_names)
