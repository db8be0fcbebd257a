"""Synthetic labeled scenes, a fixed-topology articulated humanoid, and
ground-truth interaction frames.

The humanoid is a union of oriented ellipsoid parts with a fixed vertex
budget (2562 vertices total) and an 11-joint skeleton, enough to exhibit
feet/buttocks/back/hand contact patterns. Scenes are rooms built from
labeled, watertight boxes (floor, walls, chair, sofa, bed, table, shelf,
crate). Frame generation poses the body on valid supports, anchors it to
the support surface, and extracts features through the interaction module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as hsrng
from .geometry import (
    BodyMesh,
    Bvh,
    Joint,
    SceneMesh,
    Skeleton,
    TriMesh,
    axis_angle_to_matrix,
    rot_x,
    rot_z,
    save_mesh,
    wrap_angle,
)
from .interaction import (
    CONTACT_THRESHOLD,
    FeatureMap,
    InteractionDataset,
    canonicalize,
    extract_features,
)
from .meshnet import MeshHierarchy, SpiralIndex, build_hierarchy, build_spirals

TOPOLOGY_ID = "capsuloid-2562-v1"
CLASS_NAMES = ["floor", "wall", "chair", "sofa", "bed", "table", "shelf", "other"]
BODY_VERTEX_COUNT = 2562
HIERARCHY_LEVELS = 4
POSE_NAMES = ["stand", "sit", "lie", "reach", "touch-wall"]
JITTER_BOUND = 0.06  # radians per joint axis

TABLE_TOP = 0.73
CHAIR_SEAT = 0.46
SOFA_SEAT = 0.42
BED_TOP = 0.45


class SynthError(ValueError):
    pass


# ---------------------------------------------------------------------------
# primitive meshes


def ellipsoid_mesh(center, semi_axes, axis=(0.0, 0.0, 1.0), rings: int = 8,
                   segments: int = 12) -> TriMesh:
    """Lat-long ellipsoid with rings*segments + 2 vertices, outward winding.

    The local +Z semi-axis is aligned with `axis`.
    """
    center = np.asarray(center, dtype=float)
    a, b, c = [float(x) for x in semi_axes]
    d = np.asarray(axis, dtype=float)
    d = d / np.linalg.norm(d)
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.99 else np.array([1.0, 0.0, 0.0])
    b1 = np.cross(ref, d)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(d, b1)
    frame = np.stack([b1, b2, d], axis=1)  # local -> world

    verts = [np.array([0.0, 0.0, c])]
    for i in range(1, rings + 1):
        phi = np.pi * i / (rings + 1)
        for j in range(segments):
            th = 2.0 * np.pi * j / segments
            verts.append(np.array([a * np.sin(phi) * np.cos(th),
                                   b * np.sin(phi) * np.sin(th),
                                   c * np.cos(phi)]))
    verts.append(np.array([0.0, 0.0, -c]))
    v = np.asarray(verts) @ frame.T + center

    faces = []
    def ring(i, j):
        return 1 + i * segments + (j % segments)
    for j in range(segments):
        faces.append([0, ring(0, j), ring(0, j + 1)])
    for i in range(rings - 1):
        for j in range(segments):
            faces.append([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)])
            faces.append([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)])
    bot = 1 + rings * segments
    for j in range(segments):
        faces.append([bot, ring(rings - 1, j + 1), ring(rings - 1, j)])
    return TriMesh(v, np.asarray(faces, dtype=np.int32))


_BOX_CORNERS = np.array(
    [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
     [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float)
_BOX_FACES = np.array(
    [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
     [0, 1, 5], [0, 5, 4], [2, 3, 7], [2, 7, 6],
     [1, 2, 6], [1, 6, 5], [3, 0, 4], [3, 4, 7]], dtype=np.int32)


def box_mesh(center, size, yaw: float = 0.0) -> TriMesh:
    """Axis-aligned box of full extents `size`, optionally yawed about +Z."""
    half = np.asarray(size, dtype=float) / 2.0
    v = _BOX_CORNERS * half
    if yaw:
        v = v @ rot_z(yaw).T
    return TriMesh(v + np.asarray(center, dtype=float), _BOX_FACES.copy())


def merge_meshes(meshes: list[TriMesh]) -> TriMesh:
    verts = []
    faces = []
    off = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + off)
        off += m.n_vertices
    return TriMesh(np.concatenate(verts), np.concatenate(faces))


def icosphere(radius: float = 1.0, subdivisions: int = 3) -> TriMesh:
    """Unit icosphere scaled by radius; 10 * 4^n + 2 vertices."""
    t = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                  [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]],
                 dtype=np.int64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}
        vl = v.tolist()
        nf = []

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = (np.asarray(vl[i]) + np.asarray(vl[j])) / 2.0
                m /= np.linalg.norm(m)
                cache[key] = len(vl)
                vl.append(m.tolist())
            return cache[key]

        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.asarray(vl)
        f = np.asarray(nf, dtype=np.int64)
    return TriMesh(v * radius, f.astype(np.int32))


# ---------------------------------------------------------------------------
# humanoid template

# joint order is fixed; skinning and poses index into it
_JOINTS = [
    ("pelvis", -1, (0.0, 0.0, 0.95)),
    ("spine", 0, (0.0, 0.0, 1.18)),
    ("head", 1, (0.0, 0.0, 1.48)),
    ("l_shoulder", 1, (-0.19, 0.0, 1.40)),
    ("l_elbow", 3, (-0.245, 0.0, 1.12)),
    ("r_shoulder", 1, (0.19, 0.0, 1.40)),
    ("r_elbow", 5, (0.245, 0.0, 1.12)),
    ("l_hip", 0, (-0.095, 0.0, 0.90)),
    ("l_knee", 7, (-0.105, 0.0, 0.50)),
    ("r_hip", 0, (0.095, 0.0, 0.90)),
    ("r_knee", 9, (0.105, 0.0, 0.50)),
]
JOINT_INDEX = {name: i for i, (name, _, _) in enumerate(_JOINTS)}

# (part, bone, p0, p1, rx, ry, overshoot, rings, segments); the ellipsoid long
# axis spans p0 -> p1 scaled by overshoot. Vertex counts sum to 2562.
_PARTS = [
    ("torso", "pelvis", (0, 0, 0.82), (0, 0, 1.46), 0.17, 0.115, 1.125, 41, 18),
    ("head", "head", (0, 0, 1.475), (0, 0, 1.725), 0.095, 0.115, 1.0, 12, 14),
    ("l_upper_arm", "l_shoulder", (-0.19, 0, 1.40), (-0.245, 0, 1.12), 0.052, 0.052, 1.25, 12, 12),
    ("r_upper_arm", "r_shoulder", (0.19, 0, 1.40), (0.245, 0, 1.12), 0.052, 0.052, 1.25, 12, 12),
    ("l_forearm", "l_elbow", (-0.245, 0, 1.12), (-0.275, 0, 0.86), 0.042, 0.042, 1.2, 12, 12),
    ("r_forearm", "r_elbow", (0.245, 0, 1.12), (0.275, 0, 0.86), 0.042, 0.042, 1.2, 12, 12),
    ("l_hand", "l_elbow", (-0.275, 0, 0.86), (-0.285, 0, 0.72), 0.035, 0.05, 1.1, 5, 10),
    ("r_hand", "r_elbow", (0.275, 0, 0.86), (0.285, 0, 0.72), 0.035, 0.05, 1.1, 5, 10),
    ("l_thigh", "l_hip", (-0.095, 0, 0.90), (-0.105, 0, 0.50), 0.075, 0.075, 1.18, 14, 14),
    ("r_thigh", "r_hip", (0.095, 0, 0.90), (0.105, 0, 0.50), 0.075, 0.075, 1.18, 14, 14),
    ("l_shin", "l_knee", (-0.105, 0, 0.50), (-0.11, 0, 0.09), 0.055, 0.055, 1.15, 14, 14),
    ("r_shin", "r_knee", (0.105, 0, 0.50), (0.11, 0, 0.09), 0.055, 0.055, 1.15, 14, 14),
    ("l_foot", "l_knee", (-0.11, -0.05, 0.045), (-0.11, 0.155, 0.045), 0.048, 0.045, 1.0, 7, 12),
    ("r_foot", "r_knee", (0.11, -0.05, 0.045), (0.11, 0.155, 0.045), 0.048, 0.045, 1.0, 7, 12),
]


@dataclass
class Topology:
    """Template mesh + skeleton + network-support structures for one body type."""

    name: str
    template: TriMesh
    skeleton: Skeleton  # zero pose
    part_slices: dict[str, slice]
    hierarchy: MeshHierarchy
    spirals: dict[int, SpiralIndex]  # per hierarchy level with faces

    @property
    def feature_level(self) -> int:
        return 1

    @property
    def feature_resolution(self) -> int:
        return self.hierarchy.levels[self.feature_level].n_vertices

    def to_feature(self, full_signal: np.ndarray) -> np.ndarray:
        """Restrict a full-resolution per-vertex signal to feature resolution."""
        return self.hierarchy.down_maps[0] @ full_signal

    def to_full(self, feature_signal: np.ndarray) -> np.ndarray:
        """Interpolate a feature-resolution signal back to full resolution."""
        return self.hierarchy.up_maps[0] @ feature_signal

    def feature_mask(self, full_mask: np.ndarray) -> np.ndarray:
        """Boolean mask restricted to feature vertices (selection down map)."""
        return np.asarray(full_mask, dtype=float)[self.hierarchy.keep_indices[0]] > 0.5


# pairs of parts bridged by one extra triangle so the merged mesh is a single
# connected component (edge collapse can then reach the coarsest levels)
_STITCHES = [
    ("torso", "head"),
    ("torso", "l_upper_arm"), ("l_upper_arm", "l_forearm"), ("l_forearm", "l_hand"),
    ("torso", "r_upper_arm"), ("r_upper_arm", "r_forearm"), ("r_forearm", "r_hand"),
    ("torso", "l_thigh"), ("l_thigh", "l_shin"), ("l_shin", "l_foot"),
    ("torso", "r_thigh"), ("r_thigh", "r_shin"), ("r_shin", "r_foot"),
]


def _stitch_faces(mesh: TriMesh, slices: dict[str, slice]) -> np.ndarray:
    """One bridge triangle per stitched part pair."""
    faces = []
    for a_name, b_name in _STITCHES:
        sa, sb = slices[a_name], slices[b_name]
        va = mesh.vertices[sa]
        vb = mesh.vertices[sb]
        d = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=2)
        i, j = np.unravel_index(int(d.argmin()), d.shape)
        # second anchor on part a: nearest distinct vertex to the chosen pair
        da = np.linalg.norm(va - vb[j], axis=1)
        da[i] = np.inf
        k = int(da.argmin())
        faces.append([sa.start + i, sa.start + k, sb.start + j])
    return np.asarray(faces, dtype=np.int32)


def _build_humanoid() -> tuple[TriMesh, Skeleton, dict[str, slice]]:
    meshes = []
    slices: dict[str, slice] = {}
    bones: list[str] = []
    off = 0
    for name, bone, p0, p1, rx, ry, overshoot, rings, segs in _PARTS:
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        axis = p1 - p0
        half = np.linalg.norm(axis) / 2.0
        m = ellipsoid_mesh((p0 + p1) / 2.0, (rx, ry, half * overshoot), axis,
                           rings=rings, segments=segs)
        slices[name] = slice(off, off + m.n_vertices)
        bones.append(bone)
        off += m.n_vertices
        meshes.append(m)
    mesh = merge_meshes(meshes)
    mesh = TriMesh(mesh.vertices, np.concatenate([mesh.faces, _stitch_faces(mesh, slices)]))
    assert mesh.n_vertices == BODY_VERTEX_COUNT, mesh.n_vertices

    joints = [Joint(name, parent, np.asarray(rest, dtype=float)) for name, parent, rest in _JOINTS]
    weights = np.zeros((mesh.n_vertices, len(joints)))
    for (name, _, _, _, _, _, _, _, _), bone in zip(_PARTS, bones):
        sl = slices[name]
        if name == "torso":
            # blend pelvis <-> spine along height
            z = mesh.vertices[sl, 2]
            w_spine = np.clip((z - 1.02) / (1.28 - 1.02), 0.0, 1.0)
            weights[sl, JOINT_INDEX["spine"]] = w_spine
            weights[sl, JOINT_INDEX["pelvis"]] = 1.0 - w_spine
        else:
            weights[sl, JOINT_INDEX[bone]] = 1.0
    return mesh, Skeleton(joints, weights), slices


_TOPOLOGY_CACHE: dict[str, Topology] = {}


def get_topology(name: str = TOPOLOGY_ID, spiral_length: int = 9) -> Topology:
    key = f"{name}:{spiral_length}"
    if key not in _TOPOLOGY_CACHE:
        if name != TOPOLOGY_ID:
            raise SynthError(f"unknown body topology {name!r}")
        template, skeleton, slices = _build_humanoid()
        hierarchy = build_hierarchy(template, factor=4, levels=HIERARCHY_LEVELS)
        # the network convolves at levels 1..3; the coarsest level only pools
        spirals = {
            k: build_spirals(hierarchy.levels[k], spiral_length)
            for k in range(1, len(hierarchy.levels))
            if hierarchy.levels[k].n_faces > 0
        }
        _TOPOLOGY_CACHE[key] = Topology(name, template, skeleton, slices, hierarchy, spirals)
    return _TOPOLOGY_CACHE[key]


# ---------------------------------------------------------------------------
# pose library


@dataclass
class PoseSpec:
    name: str
    joints: np.ndarray  # (J, 3) axis-angle
    root_pitch: float  # rotation about +X baked into the root
    contact_mask: np.ndarray  # (V,) bool, expected contact at full resolution
    anchor: str  # floor | seat | bed | table | wall
    tip_vertex: int | None = None  # fingertip vertex for reach/touch poses
    jitter_bound: float = JITTER_BOUND


@dataclass
class PoseLibrary:
    poses: dict[str, PoseSpec]

    def __getitem__(self, name: str) -> PoseSpec:
        if name not in self.poses:
            raise SynthError(f"unknown pose {name!r} (have {sorted(self.poses)})")
        return self.poses[name]

    def names(self) -> list[str]:
        return list(self.poses)


def _posed_template(topo: Topology, joints: np.ndarray, root_pitch: float) -> np.ndarray:
    v = topo.skeleton.skin(topo.template.vertices, joints)
    if root_pitch:
        v = v @ rot_x(root_pitch).T
    return v


_POSE_CACHE: dict[str, PoseLibrary] = {}


def pose_library(topology: str = TOPOLOGY_ID) -> PoseLibrary:
    if topology in _POSE_CACHE:
        return _POSE_CACHE[topology]
    topo = get_topology(topology)
    nj = topo.skeleton.n_joints
    j = JOINT_INDEX
    poses: dict[str, PoseSpec] = {}

    part_mask = {}
    for name, sl in topo.part_slices.items():
        m = np.zeros(BODY_VERTEX_COUNT, dtype=bool)
        m[sl] = True
        part_mask[name] = m
    feet = part_mask["l_foot"] | part_mask["r_foot"]

    # stand: zero pose, soles of the feet
    stand_j = np.zeros((nj, 3))
    v = _posed_template(topo, stand_j, 0.0)
    stand_mask = feet & (v[:, 2] < v[feet, 2].min() + 0.02)
    poses["stand"] = PoseSpec("stand", stand_j, 0.0, stand_mask, "floor")

    # sit: hips flexed forward, knees folded back down, arms relaxed forward
    sit_j = np.zeros((nj, 3))
    sit_j[j["l_hip"], 0] = np.pi / 2
    sit_j[j["r_hip"], 0] = np.pi / 2
    sit_j[j["l_knee"], 0] = -np.pi / 2
    sit_j[j["r_knee"], 0] = -np.pi / 2
    sit_j[j["l_shoulder"], 0] = 0.35
    sit_j[j["r_shoulder"], 0] = 0.35
    v = _posed_template(topo, sit_j, 0.0)
    seat_region = part_mask["torso"] | part_mask["l_thigh"] | part_mask["r_thigh"]
    sit_mask = seat_region & (v[:, 2] < v[seat_region, 2].min() + 0.03)
    poses["sit"] = PoseSpec("sit", sit_j, 0.0, sit_mask, "seat")

    # lie: straight body pitched onto its back
    lie_j = np.zeros((nj, 3))
    v = _posed_template(topo, lie_j, np.pi / 2)
    lie_mask = v[:, 2] < v[:, 2].min() + 0.03
    poses["lie"] = PoseSpec("lie", lie_j, np.pi / 2, lie_mask, "bed")

    # reach: right arm pitched down-forward so the hand lands just above a
    # table top while standing; touch-wall: arm horizontal at shoulder height
    shoulder_z = topo.skeleton.joints[j["r_shoulder"]].rest[2]
    hand = part_mask["r_hand"]
    tip_rest = topo.template.vertices[hand][:, 2].argmin()
    tip_vertex = int(np.nonzero(hand)[0][tip_rest])
    arm_len = shoulder_z - topo.template.vertices[tip_vertex, 2]
    for name, target_z in (("reach", TABLE_TOP + 0.02), ("touch-wall", None)):
        pj = np.zeros((nj, 3))
        if target_z is None:
            angle = np.pi / 2
        else:
            angle = float(np.arccos(np.clip((shoulder_z - target_z) / arm_len, -1.0, 1.0)))
        pj[j["r_shoulder"], 0] = angle
        v = _posed_template(topo, pj, 0.0)
        tip_ball = np.linalg.norm(v - v[tip_vertex], axis=1) <= 0.025
        mask = stand_mask | (hand & tip_ball)
        poses[name] = PoseSpec(name, pj, 0.0, mask, "table" if target_z else "wall",
                               tip_vertex=tip_vertex)

    _POSE_CACHE[topology] = PoseLibrary(poses)
    return _POSE_CACHE[topology]


def generate_body(pose_name: str, jitter_seed: int | None = None,
                  topology: str = TOPOLOGY_ID) -> BodyMesh:
    """Fixed-topology humanoid in a named pose, optionally jittered."""
    topo = get_topology(topology)
    spec = pose_library(topology)[pose_name]
    joints = spec.joints.copy()
    if jitter_seed is not None:
        g = hsrng.generator(jitter_seed, f"body-jitter-{pose_name}")
        joints = joints + g.uniform(-spec.jitter_bound, spec.jitter_bound, size=joints.shape)
    skel = Skeleton(topo.skeleton.joints, topo.skeleton.weights, joints)
    return BodyMesh(topo.template, skel, rot_x(spec.root_pitch), np.zeros(3), topology)


# ---------------------------------------------------------------------------
# scenes


@dataclass
class FurnitureItem:
    kind: str  # class name
    center: np.ndarray  # (2,) xy of footprint center
    yaw: float
    boxes: list[tuple[np.ndarray, np.ndarray]]  # local (center, full size)
    footprint: np.ndarray  # (2,) local xy full extents (pre-yaw)

    def world_boxes(self) -> list[TriMesh]:
        r = rot_z(self.yaw)
        out = []
        for c, s in self.boxes:
            wc = r @ np.asarray(c, dtype=float)
            wc[:2] += self.center
            out.append(box_mesh(wc, s, self.yaw))
        return out

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for m in self.world_boxes():
            lo = np.minimum(lo, m.vertices.min(axis=0))
            hi = np.maximum(hi, m.vertices.max(axis=0))
        return lo, hi


@dataclass
class SceneSpec:
    seed: int
    room: np.ndarray  # (2,) room inner extents, centered at origin
    items: list[FurnitureItem] = field(default_factory=list)
    wall_height: float = 2.6
    wall_thickness: float = 0.1
    floor_thickness: float = 0.12


def _chair() -> FurnitureItem:
    seat_w, seat_d = 0.46, 0.46
    boxes = [
        (np.array([0, 0, CHAIR_SEAT - 0.03]), np.array([seat_w, seat_d, 0.06])),
        (np.array([0, -seat_d / 2 + 0.025, CHAIR_SEAT + 0.25]), np.array([seat_w, 0.05, 0.5])),
    ]
    for sx in (-1, 1):
        for sy in (-1, 1):
            boxes.append((np.array([sx * (seat_w / 2 - 0.03), sy * (seat_d / 2 - 0.03),
                                    (CHAIR_SEAT - 0.06) / 2]),
                          np.array([0.05, 0.05, CHAIR_SEAT - 0.06])))
    return FurnitureItem("chair", np.zeros(2), 0.0, boxes, np.array([seat_w, seat_d]))


def _sofa() -> FurnitureItem:
    w, d = 1.6, 0.75
    boxes = [
        (np.array([0, 0.03, SOFA_SEAT / 2]), np.array([w - 0.3, d - 0.06, SOFA_SEAT])),
        (np.array([0, -d / 2 + 0.09, SOFA_SEAT + 0.23]), np.array([w - 0.3, 0.18, 0.46])),
        (np.array([-(w / 2 - 0.075), 0, 0.29]), np.array([0.15, d, 0.58])),
        (np.array([w / 2 - 0.075, 0, 0.29]), np.array([0.15, d, 0.58])),
    ]
    return FurnitureItem("sofa", np.zeros(2), 0.0, boxes, np.array([w, d]))


def _bed() -> FurnitureItem:
    l, w = 2.05, 1.5
    boxes = [(np.array([0, 0, BED_TOP / 2]), np.array([l, w, BED_TOP]))]
    return FurnitureItem("bed", np.zeros(2), 0.0, boxes, np.array([l, w]))


def _table() -> FurnitureItem:
    w, d = 1.25, 0.75
    boxes = [(np.array([0, 0, TABLE_TOP - 0.025]), np.array([w, d, 0.05]))]
    for sx in (-1, 1):
        for sy in (-1, 1):
            boxes.append((np.array([sx * (w / 2 - 0.05), sy * (d / 2 - 0.05),
                                    (TABLE_TOP - 0.05) / 2]),
                          np.array([0.06, 0.06, TABLE_TOP - 0.05])))
    return FurnitureItem("table", np.zeros(2), 0.0, boxes, np.array([w, d]))


def _shelf() -> FurnitureItem:
    boxes = [(np.array([0, 0, 0.9]), np.array([0.9, 0.35, 1.8]))]
    return FurnitureItem("shelf", np.zeros(2), 0.0, boxes, np.array([0.9, 0.35]))


def _crate() -> FurnitureItem:
    boxes = [(np.array([0, 0, 0.25]), np.array([0.5, 0.5, 0.5]))]
    return FurnitureItem("other", np.zeros(2), 0.0, boxes, np.array([0.5, 0.5]))


def scene_spec(seed: int) -> SceneSpec:
    """Deterministic room layout for a seed; always has floor, walls, a bed,
    a sofa, a table and at least one chair."""
    g = hsrng.generator(seed, "scene")
    room = np.array([g.uniform(5.2, 6.2), g.uniform(4.6, 5.6)])
    spec = SceneSpec(seed=seed, room=room)

    wanted: list[FurnitureItem] = [_bed(), _sofa(), _table(), _chair()]
    if g.random() < 0.5:
        wanted.append(_chair())
    if g.random() < 0.6:
        wanted.append(_shelf())
    if g.random() < 0.5:
        wanted.append(_crate())

    margin = 0.06  # to walls
    gap = 0.02  # between items (interpenetration forbidden)
    for item in wanted:
        placed = False
        for _ in range(80):
            item.yaw = wrap_angle(g.uniform(-np.pi, np.pi))
            half = room / 2 - margin
            item.center = np.array([g.uniform(-half[0], half[0]), g.uniform(-half[1], half[1])])
            lo, hi = item.aabb()
            if (lo[:2] < -room / 2 + margin).any() or (hi[:2] > room / 2 - margin).any():
                continue
            ok = True
            for other in spec.items:
                olo, ohi = other.aabb()
                if (lo[:2] < ohi[:2] + gap).all() and (hi[:2] > olo[:2] - gap).all():
                    ok = False
                    break
            if ok:
                placed = True
                break
        if placed:
            spec.items.append(item)
    return spec


def scene_mesh_from_spec(spec: SceneSpec) -> SceneMesh:
    rx, ry = spec.room / 2
    t = spec.wall_thickness
    h = spec.wall_height
    meshes = [box_mesh((0, 0, -spec.floor_thickness / 2),
                       (spec.room[0] + 2 * t, spec.room[1] + 2 * t, spec.floor_thickness))]
    labels = [np.zeros(8, dtype=np.int64)]  # floor
    wall_id = CLASS_NAMES.index("wall")
    walls = [
        ((0, ry + t / 2, h / 2), (spec.room[0] + 2 * t, t, h)),
        ((0, -ry - t / 2, h / 2), (spec.room[0] + 2 * t, t, h)),
        ((rx + t / 2, 0, h / 2), (t, spec.room[1], h)),
        ((-rx - t / 2, 0, h / 2), (t, spec.room[1], h)),
    ]
    for c, s in walls:
        meshes.append(box_mesh(c, s))
        labels.append(np.full(8, wall_id, dtype=np.int64))
    for item in spec.items:
        cid = CLASS_NAMES.index(item.kind)
        for m in item.world_boxes():
            meshes.append(m)
            labels.append(np.full(8, cid, dtype=np.int64))
    return SceneMesh(merge_meshes(meshes), np.concatenate(labels), list(CLASS_NAMES))


def generate_scene(seed: int) -> SceneMesh:
    """Procedural labeled room; identical bytes for identical seeds."""
    return scene_mesh_from_spec(scene_spec(seed))


# ---------------------------------------------------------------------------
# frame generation


def _body_part_aabbs(topo: Topology, verts: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for sl in topo.part_slices.values():
        out.append((verts[sl].min(axis=0), verts[sl].max(axis=0)))
    return out


def _collides(topo: Topology, verts: np.ndarray, spec: SceneSpec,
              skip: FurnitureItem | None) -> bool:
    room = spec.room / 2
    if (verts[:, :2] < -room + 0.005).any() or (verts[:, :2] > room - 0.005).any():
        return True
    parts = _body_part_aabbs(topo, verts)
    for item in spec.items:
        if item is skip:
            continue
        lo, hi = item.aabb()
        for plo, phi in parts:
            if (plo < hi).all() and (phi > lo).all():
                return True
    return False


def _support_height(kind: str) -> float:
    return {"chair": CHAIR_SEAT, "sofa": SOFA_SEAT, "bed": BED_TOP}[kind]


def _place_frame(topo: Topology, lib: PoseLibrary, spec: SceneSpec,
                 scene: SceneMesh, bvh: Bvh, g: np.random.Generator,
                 pose_name: str) -> BodyMesh | None:
    """One placement attempt; returns a posed body or None."""
    pose = lib[pose_name]
    joints = pose.joints + g.uniform(-pose.jitter_bound, pose.jitter_bound,
                                     size=pose.joints.shape)
    skel = Skeleton(topo.skeleton.joints, topo.skeleton.weights, joints)
    base = BodyMesh(topo.template, skel, rot_x(pose.root_pitch), np.zeros(3), topo.name)
    local = base.posed_vertices()  # root at origin
    mask = pose.contact_mask
    room = spec.room / 2

    if pose.anchor == "floor":
        yaw = g.uniform(-np.pi, np.pi)
        xy = np.array([g.uniform(-room[0] + 0.5, room[0] - 0.5),
                       g.uniform(-room[1] + 0.5, room[1] - 0.5)])
        r = rot_z(yaw)
        v = local @ r.T
        t = np.array([xy[0], xy[1], -v[mask, 2].min()])
        skip = None
    elif pose.anchor in ("seat", "bed"):
        kinds = ("bed",) if pose.anchor == "bed" else ("chair", "sofa")
        targets = [it for it in spec.items if it.kind in kinds]
        if not targets:
            return None
        item = targets[int(g.integers(len(targets)))]
        top = _support_height(item.kind)
        if pose.anchor == "seat":
            yaw = item.yaw + g.uniform(-0.15, 0.15)
            r = rot_z(yaw)
            v = local @ r.T
            # buttocks over the seat center, nudged toward the backrest
            back = rot_z(item.yaw) @ np.array([0.0, -0.04, 0.0])
            xy = item.center + back[:2]
            if item.kind == "sofa":
                along = rot_z(item.yaw) @ np.array([g.uniform(-0.45, 0.45), 0.0, 0.0])
                xy = xy + along[:2]
            t = np.array([xy[0], xy[1], top - v[mask, 2].min()])
        else:
            # long axis of the body onto the long axis of the bed
            yaw = wrap_angle(item.yaw + np.pi / 2 + (np.pi if g.random() < 0.5 else 0.0))
            r = rot_z(yaw)
            v = local @ r.T
            span = v[:, :2].max(axis=0) + v[:, :2].min(axis=0)
            xy = item.center - span / 2 + g.uniform(-0.02, 0.02, size=2)
            t = np.array([xy[0], xy[1], top - v[mask, 2].min()])
        skip = item
    elif pose.anchor == "table":
        targets = [it for it in spec.items if it.kind == "table"]
        if not targets:
            return None
        item = targets[int(g.integers(len(targets)))]
        edge = int(g.integers(4))  # +y, -y, +x, -x in table frame
        w, d = item.footprint / 2
        local_dir = [np.array([0, 1.0]), np.array([0, -1.0]),
                     np.array([1.0, 0]), np.array([-1.0, 0])][edge]
        edge_dist = d if edge < 2 else w
        rz = rot_z(item.yaw)[:2, :2]
        out_dir = rz @ local_dir
        lateral = rz @ local_dir[::-1]
        # face the table: body forward (+y after yaw) opposes out_dir
        yaw = wrap_angle(np.arctan2(-out_dir[1], -out_dir[0]) - np.pi / 2 + g.uniform(-0.05, 0.05))
        r = rot_z(yaw)
        v = local @ r.T
        tip_fwd = float((v[pose.tip_vertex, :2] * (-out_dir)).sum())
        slide = g.uniform(-0.25, 0.25)
        xy = item.center + out_dir * (edge_dist + tip_fwd - g.uniform(0.04, 0.08)) + lateral * slide
        t = np.array([xy[0], xy[1], -v[lib["stand"].contact_mask, 2].min()])
        skip = item
    elif pose.anchor == "wall":
        wall = int(g.integers(4))  # +y, -y, +x, -x
        normal = [np.array([0, -1.0]), np.array([0, 1.0]),
                  np.array([-1.0, 0]), np.array([1.0, 0])][wall]
        surface = [np.array([0, room[1]]), np.array([0, -room[1]]),
                   np.array([room[0], 0]), np.array([-room[0], 0])][wall]
        yaw = wrap_angle(np.arctan2(-normal[1], -normal[0]) - np.pi / 2 + g.uniform(-0.04, 0.04))
        r = rot_z(yaw)
        v = local @ r.T
        tip_fwd = float((v[pose.tip_vertex, :2] * (-normal)).sum())
        lateral = normal[::-1] * np.array([1, -1])
        span = (room[0] if wall < 2 else room[1]) - 0.45
        slide = g.uniform(-span, span) if span > 0 else 0.0
        xy = surface + normal * (tip_fwd + g.uniform(0.015, 0.03)) + lateral * slide
        t = np.array([xy[0], xy[1], -v[lib["stand"].contact_mask, 2].min()])
        skip = None
    else:
        raise SynthError(f"unknown anchor {pose.anchor!r}")

    world = v + t
    if _collides(topo, world, spec, skip):
        return None
    return BodyMesh(topo.template, skel, r @ rot_x(pose.root_pitch), t, topo.name)


_POSE_WEIGHTS = {"stand": 0.28, "sit": 0.27, "lie": 0.20, "reach": 0.125, "touch-wall": 0.125}


def generate_frames(n: int, seed: int, n_scenes: int = 4,
                    topology: str = TOPOLOGY_ID,
                    threshold: float = CONTACT_THRESHOLD,
                    min_mask_agreement: float = 0.9,
                    report: list | None = None) -> InteractionDataset:
    """Synthesize `n` ground-truth frames across `n_scenes` generated rooms.

    Placements whose extracted contact disagrees with the pose's expected
    contact mask on more than 10% of mask vertices are retried and eventually
    skipped (appended to `report` when given).
    """
    if n < 1:
        raise SynthError("need n >= 1 frames")
    topo = get_topology(topology)
    lib = pose_library(topology)
    scenes = []
    for k in range(n_scenes):
        spec = scene_spec(int(hsrng.generator(seed, f"scene-seed-{k}").integers(2 ** 31)))
        mesh = scene_mesh_from_spec(spec)
        scenes.append((spec, mesh, Bvh(mesh.mesh)))

    names = list(_POSE_WEIGHTS)
    probs = np.array([_POSE_WEIGHTS[p] for p in names])
    probs = probs / probs.sum()

    frames = []
    for i in range(n):
        g = hsrng.generator(seed, f"frame-{i}")
        spec, mesh, bvh = scenes[i % len(scenes)]
        pose_name = names[int(g.choice(len(names), p=probs))]
        body = None
        for _attempt in range(20):
            body = _place_frame(topo, lib, spec, mesh, bvh, g, pose_name)
            if body is None:
                continue
            feat_verts = topo.to_feature(body.posed_vertices())
            _, fmap = extract_features(body, mesh, bvh, threshold, vertices=feat_verts)
            fmask = topo.feature_mask(lib[pose_name].contact_mask)
            if fmask.any() and fmap.contact[fmask].mean() >= min_mask_agreement:
                canon = canonicalize(body)
                frames.append((topo.to_feature(canon.posed_vertices()), fmap))
                break
            body = None
        if body is None and report is not None:
            report.append({"frame": i, "pose": pose_name, "scene": int(spec.seed)})
    return InteractionDataset(frames=frames, class_names=list(CLASS_NAMES), topology=topology)


# ---------------------------------------------------------------------------
# body file IO: OBJ template + JSON pose sidecar


def save_body(body: BodyMesh, path) -> None:
    path = Path(path)
    save_mesh(body.mesh, path)
    meta = {
        "topology": body.topology,
        "pose": body.skeleton.pose.tolist() if body.skeleton is not None else None,
        "root_rotation": body.root_rotation.tolist(),
        "root_translation": body.root_translation.tolist(),
    }
    path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=1))


def load_body(path) -> BodyMesh:
    """OBJ + .json sidecar; a bare OBJ loads as an unskeletoned vertex set."""
    from .geometry import load_mesh

    path = Path(path)
    mesh = load_mesh(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        return BodyMesh(mesh, None, np.eye(3), np.zeros(3), "external")
    meta = json.loads(sidecar.read_text())
    topology = meta.get("topology", "external")
    if topology == TOPOLOGY_ID:
        topo = get_topology(topology)
        if mesh.n_vertices != topo.template.n_vertices:
            raise SynthError(f"{path}: vertex count does not match topology {topology}")
        skel = Skeleton(topo.skeleton.joints, topo.skeleton.weights,
                        np.asarray(meta["pose"], dtype=float))
    else:
        skel = None
    return BodyMesh(mesh, skel,
                    np.asarray(meta["root_rotation"], dtype=float),
                    np.asarray(meta["root_translation"], dtype=float),
                    topology)
