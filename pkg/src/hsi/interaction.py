"""Per-vertex contact/semantics feature maps and the training dataset.

For every body vertex the distance to the closest scene surface point is
computed; vertices within the contact threshold (5 cm by default, boundary
inclusive) are labeled in contact and carry the one-hot semantic class of
the contacted surface. Class 0 is reserved for "void": the semantic label
of vertices not in contact, so the per-vertex categorical loss is defined
everywhere.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BodyMesh,
    Bvh,
    SceneMesh,
    euler_xyz_from_matrix,
    rot_x,
    up_axis,
)

CONTACT_THRESHOLD = 0.05  # meters
VOID_CLASS = 0

_MAGIC = b"POSA1\n"
_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass
class FeatureMap:
    """Contact + semantics on the body, at feature resolution.

    `contact` holds probabilities at inference and hard {0,1} labels at
    training time. `semantics` rows are distributions over void + the scene
    classes (so width n_classes + 1); one-hot at training time.
    """

    contact: np.ndarray  # (V,) in [0, 1]
    semantics: np.ndarray  # (V, n_classes + 1), rows sum to 1

    def __post_init__(self):
        self.contact = np.asarray(self.contact, dtype=np.float64)
        self.semantics = np.asarray(self.semantics, dtype=np.float64)
        if self.semantics.shape[0] != self.contact.shape[0]:
            raise ValueError("contact and semantics disagree on vertex count")

    @property
    def resolution(self) -> int:
        return int(self.contact.shape[0])

    @property
    def n_classes(self) -> int:
        """Scene classes, void excluded."""
        return int(self.semantics.shape[1]) - 1

    def semantic_ids(self) -> np.ndarray:
        """Per-vertex argmax class id (0 = void)."""
        return self.semantics.argmax(axis=1)


@dataclass
class ContactRecord:
    distances: np.ndarray  # (V,) unsigned meters
    closest_labels: np.ndarray  # (V,) scene class of the closest surface point


@dataclass
class InteractionDataset:
    frames: list[tuple[np.ndarray, FeatureMap]]  # (canonical verts (V,3), features)
    class_names: list[str]
    topology: str = "external"

    def __post_init__(self):
        for v, f in self.frames:
            if f.resolution != v.shape[0]:
                raise DatasetError("frame vertices and features disagree on vertex count")
            if f.n_classes != len(self.class_names):
                raise DatasetError("frame class count does not match class names")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def resolution(self) -> int:
        return self.frames[0][0].shape[0] if self.frames else 0


def face_majority_label(scene: SceneMesh, face_index: int) -> int:
    """Semantic class of a face: majority vertex label, ties to the lowest id."""
    labels = scene.labels[scene.mesh.faces[face_index]]
    counts = np.bincount(labels, minlength=scene.n_classes)
    return int(counts.argmax())


def face_majority_labels(scene: SceneMesh, face_indices: np.ndarray) -> np.ndarray:
    faces = scene.mesh.faces[np.asarray(face_indices, dtype=np.int64)]
    labels = scene.labels[faces]  # (N, 3)
    n = scene.n_classes
    counts = np.zeros((labels.shape[0], n), dtype=np.int64)
    for k in range(3):
        np.add.at(counts, (np.arange(labels.shape[0]), labels[:, k]), 1)
    return counts.argmax(axis=1)


def extract_features(
    body: BodyMesh | np.ndarray,
    scene: SceneMesh,
    structure: Bvh,
    threshold: float = CONTACT_THRESHOLD,
    vertices: np.ndarray | None = None,
) -> tuple[ContactRecord, FeatureMap]:
    """Contact and semantics of a posed body against a scene.

    `vertices` overrides the query points (e.g. body vertices already
    downsampled to feature resolution); by default the body's posed full
    resolution vertices are used.
    """
    if threshold <= 0:
        raise ValueError("contact threshold must be positive")
    if scene.mesh.n_faces == 0:
        raise ValueError("scene mesh is empty")
    if vertices is None:
        vertices = body.posed_vertices() if isinstance(body, BodyMesh) else np.asarray(body)
    dist, faces, _ = structure.query(vertices)
    labels = face_majority_labels(scene, faces)
    contact = (dist <= threshold).astype(np.float64)  # boundary inclusive
    sem = np.zeros((len(dist), scene.n_classes + 1))
    touching = contact > 0
    sem[~touching, VOID_CLASS] = 1.0
    sem[touching, labels[touching] + 1] = 1.0
    return ContactRecord(distances=dist, closest_labels=labels), FeatureMap(contact, sem)


def canonicalize(body: BodyMesh) -> BodyMesh:
    """Strip yaw-like root rotation and horizontal offset.

    The root rotation is decomposed as intrinsic X·Y·Z Euler angles; the Y
    and Z parts are zeroed and the X part (ground pitch: standing vs lying)
    is kept. Horizontal translation is zeroed, height is kept.
    """
    a, _, _ = euler_xyz_from_matrix(body.root_rotation)
    t = np.zeros(3)
    t[up_axis()] = body.root_translation[up_axis()]
    return body.with_root(rot_x(a), t)


# ---------------------------------------------------------------------------
# dataset serialization
#
# magic "POSA1\n", u32 version=1, u32 frame count, u32 feature vertex count,
# u16 class count (void excluded); per frame: f32 positions (V*3),
# u8 contact (V), u16 semantic class id (V); then a trailing block
# u32 length + JSON {"class_names": [...], "topology": "..."}.
# Little-endian throughout.


def write_dataset(ds: InteractionDataset, path) -> None:
    v = ds.resolution
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIH", _VERSION, len(ds.frames), v, len(ds.class_names)))
        for verts, fmap in ds.frames:
            fh.write(np.asarray(verts, dtype="<f4").tobytes())
            fh.write((fmap.contact > 0.5).astype("<u1").tobytes())
            fh.write(fmap.semantic_ids().astype("<u2").tobytes())
        meta = json.dumps(
            {"class_names": ds.class_names, "topology": ds.topology},
            sort_keys=True, separators=(",", ":"),
        ).encode("utf-8")
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def read_dataset(path) -> InteractionDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise DatasetError(f"{path}: bad magic")
    off = len(_MAGIC)
    try:
        version, n_frames, v, n_classes = struct.unpack_from("<IIIH", raw, off)
    except struct.error:
        raise DatasetError(f"{path}: truncated header") from None
    off += struct.calcsize("<IIIH")
    if version != _VERSION:
        raise DatasetError(f"{path}: unsupported version {version}")
    frames = []
    frame_bytes = v * 12 + v + v * 2
    for _ in range(n_frames):
        if off + frame_bytes > len(raw):
            raise DatasetError(f"{path}: truncated frame data")
        verts = np.frombuffer(raw, dtype="<f4", count=v * 3, offset=off).reshape(v, 3)
        off += v * 12
        contact = np.frombuffer(raw, dtype="<u1", count=v, offset=off)
        off += v
        cls = np.frombuffer(raw, dtype="<u2", count=v, offset=off)
        off += v * 2
        if cls.size and cls.max() > n_classes:
            raise DatasetError(f"{path}: semantic class id out of range")
        sem = np.zeros((v, n_classes + 1))
        sem[np.arange(v), cls.astype(np.int64)] = 1.0
        frames.append((verts.astype(np.float64), FeatureMap(contact.astype(np.float64), sem)))
    class_names = [f"class{i}" for i in range(n_classes)]
    topology = "external"
    if off + 4 <= len(raw):
        (meta_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        if off + meta_len > len(raw):
            raise DatasetError(f"{path}: truncated metadata")
        meta = json.loads(raw[off: off + meta_len].decode("utf-8"))
        class_names = list(meta.get("class_names", class_names))
        topology = meta.get("topology", topology)
    if len(class_names) != n_classes:
        raise DatasetError(f"{path}: class name count disagrees with header")
    return InteractionDataset(frames=frames, class_names=class_names, topology=topology)
