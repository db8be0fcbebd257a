"""Mesh downsampling hierarchy and spiral vertex sequences.

The hierarchy is built by greedy quadric-error edge collapses with subset
vertex placement (coarse vertices are a subset of fine vertices), so a
coarse level's signal is exactly recoverable from the finer one. Spiral
sequences enumerate the 1-ring counter-clockwise from the smallest-index
neighbor, then walk outward ring by ring; short sequences pad with the
center vertex.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import Bvh, TriMesh, barycentric_on_face


class MeshnetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# spirals


@dataclass
class SpiralIndex:
    indices: np.ndarray  # (V, l) int32; row starts with the vertex itself
    length: int


def _rotation_maps(mesh: TriMesh):
    """Per-vertex successor map around each center (CCW for CCW-wound faces)."""
    nxt: list[dict[int, int]] = [dict() for _ in range(mesh.n_vertices)]
    for a, b, c in mesh.faces:
        nxt[a][b] = c
        nxt[b][c] = a
        nxt[c][a] = b
    return nxt


def _one_ring(center: int, nxt: list[dict[int, int]]) -> list[int]:
    ring_next = nxt[center]
    if not ring_next:
        raise MeshnetError(f"vertex {center} is isolated (no incident faces)")
    preds = set(ring_next.values())
    starts = sorted(k for k in ring_next if k not in preds)
    order: list[int] = []
    seen: set[int] = set()
    if not starts:
        starts = [min(ring_next)]  # closed ring: smallest-index neighbor
    for s in starts:  # open arcs walk from each arc head, in index order
        v = s
        while v is not None and v not in seen:
            order.append(v)
            seen.add(v)
            v = ring_next.get(v)
    for v in sorted(set(ring_next) | set(ring_next.values())):
        if v not in seen:  # defensive: stray non-manifold neighbors
            order.append(v)
            seen.add(v)
    return order


def build_spirals(mesh: TriMesh, length: int = 9) -> SpiralIndex:
    """Fixed-length spiral sequence per vertex."""
    if length < 1:
        raise MeshnetError("spiral length must be >= 1")
    nxt = _rotation_maps(mesh)
    out = np.empty((mesh.n_vertices, length), dtype=np.int32)
    for i in range(mesh.n_vertices):
        seq = [i]
        if length > 1:
            visited = {i}
            frontier = _one_ring(i, nxt)
            while frontier and len(seq) < length:
                ring = [v for v in frontier if v not in visited]
                seq.extend(ring[: length - len(seq)])
                visited.update(ring)
                nxt_frontier: list[int] = []
                for u in ring:
                    for w in _one_ring(u, nxt):
                        if w not in visited and w not in nxt_frontier:
                            nxt_frontier.append(w)
                frontier = nxt_frontier
        while len(seq) < length:
            seq.append(i)  # pad: repeated center contributes the center features
        out[i] = seq[:length]
    return SpiralIndex(indices=out, length=length)


# ---------------------------------------------------------------------------
# hierarchy


@dataclass
class MeshHierarchy:
    levels: list[TriMesh]
    down_maps: list[sp.csr_matrix]  # (V_coarse, V_fine), row-stochastic
    up_maps: list[sp.csr_matrix]  # (V_fine, V_coarse), row-stochastic
    keep_indices: list[np.ndarray]  # fine index of each coarse vertex

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def _vertex_quadrics(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    q = np.zeros((len(verts), 4, 4))
    for a, b, c in faces:
        n = np.cross(verts[b] - verts[a], verts[c] - verts[a])
        area2 = float(np.linalg.norm(n))
        if area2 < 1e-30:
            continue
        n = n / area2
        d = -float(n @ verts[a])
        p = np.array([n[0], n[1], n[2], d])
        k = np.outer(p, p) * (0.5 * area2)
        q[a] += k
        q[b] += k
        q[c] += k
    return q


def _quadric_cost(q: np.ndarray, v: np.ndarray) -> float:
    h = np.array([v[0], v[1], v[2], 1.0])
    return float(h @ q @ h)


def _collapse_level(mesh: TriMesh, target: int):
    """Greedy QEM collapse keeping vertex positions; returns (coarse mesh, kept ids)."""
    verts = mesh.vertices
    faces = {i: tuple(int(x) for x in f) for i, f in enumerate(mesh.faces)}
    vert_faces: dict[int, set[int]] = {i: set() for i in range(mesh.n_vertices)}
    for fi, f in faces.items():
        for v in f:
            vert_faces[v].add(fi)
    quadrics = _vertex_quadrics(verts, mesh.faces)
    alive = np.ones(mesh.n_vertices, dtype=bool)
    n_alive = mesh.n_vertices
    version = np.zeros(mesh.n_vertices, dtype=np.int64)

    def neighbors(v: int) -> set[int]:
        out = set()
        for fi in vert_faces[v]:
            out.update(faces[fi])
        out.discard(v)
        return out

    def push_edges(v: int, heap):
        for u in sorted(neighbors(v)):
            for rem, keep in ((v, u), (u, v)):
                cost = _quadric_cost(quadrics[rem] + quadrics[keep], verts[keep])
                heapq.heappush(heap, (cost, rem, keep, version[rem], version[keep]))

    def refill_heap():
        h: list[tuple] = []
        for v in range(mesh.n_vertices):
            if not alive[v]:
                continue
            for u in sorted(neighbors(v)):
                if u > v:
                    for rem, keep in ((v, u), (u, v)):
                        cost = _quadric_cost(quadrics[rem] + quadrics[keep], verts[keep])
                        heapq.heappush(h, (cost, rem, keep, version[rem], version[keep]))
        return h

    heap = refill_heap()
    strict = True
    while n_alive > target:
        if not heap:
            if strict:
                # strict pass exhausted: allow collapses that merge faces
                strict = False
                heap = refill_heap()
                continue
            break
        cost, rem, keep, vr, vk = heapq.heappop(heap)
        if not (alive[rem] and alive[keep]) or version[rem] != vr or version[keep] != vk:
            continue
        if keep not in neighbors(rem):
            continue
        changed = [fi for fi in vert_faces[rem] if keep not in faces[fi]]
        dying = [fi for fi in vert_faces[rem] if keep in faces[fi]]
        existing = {tuple(sorted(faces[fi])) for fi in vert_faces[keep] if fi not in dying}
        dup: list[int] = []
        ok = True
        for fi in changed:
            f = tuple(keep if x == rem else x for x in faces[fi])
            if len(set(f)) < 3 or tuple(sorted(f)) in existing:
                if strict:
                    ok = False
                    break
                dup.append(fi)
                continue
            if strict:
                a, b, c = (verts[x] for x in faces[fi])
                n_old = np.cross(b - a, c - a)
                a, b, c = (verts[x] for x in f)
                n_new = np.cross(b - a, c - a)
                # sliver bridge faces have near-zero normals; let them move freely
                if (np.linalg.norm(n_old) > 1e-10 and np.linalg.norm(n_new) > 1e-10
                        and float(n_old @ n_new) <= 0.0):
                    ok = False
                    break
            existing.add(tuple(sorted(f)))
        if not ok:
            continue
        touched = set()
        for fi in dying + dup:
            for v in faces[fi]:
                if v != rem:
                    vert_faces[v].discard(fi)
                    touched.add(v)
            del faces[fi]
        for fi in changed:
            if fi in dup:
                continue
            faces[fi] = tuple(keep if x == rem else x for x in faces[fi])
            vert_faces[keep].add(fi)
        vert_faces[rem] = set()
        alive[rem] = False
        quadrics[keep] = quadrics[keep] + quadrics[rem]
        n_alive -= 1
        version[keep] += 1
        # a face removal can orphan its third vertex; drop orphans right away
        # so no level carries isolated vertices
        for v in sorted(touched):
            if alive[v] and not vert_faces[v]:
                alive[v] = False
                n_alive -= 1
        push_edges(keep, heap)

    if n_alive > target:
        # only isolated vertices (no incident faces) can remain uncollapsible;
        # drop them directly, lowest index first
        for v in range(mesh.n_vertices):
            if n_alive <= target:
                break
            if alive[v] and not vert_faces[v]:
                alive[v] = False
                n_alive -= 1

    if n_alive > target:
        raise MeshnetError(f"could not reach target vertex count {target} (stuck at {n_alive})")

    kept = np.nonzero(alive)[0]
    remap = -np.ones(mesh.n_vertices, dtype=np.int64)
    remap[kept] = np.arange(len(kept))
    coarse_faces = np.array(
        [[remap[v] for v in faces[fi]] for fi in sorted(faces)], dtype=np.int32
    ).reshape(-1, 3)
    return TriMesh(verts[kept].copy(), coarse_faces), kept


def _barycentric_map(fine: TriMesh, coarse: TriMesh, kept: np.ndarray) -> sp.csr_matrix:
    """(V_fine, V_coarse) rows: barycentric weights on the nearest coarse triangle.

    Kept vertices map exactly to themselves so coarse-level signals survive a
    round trip unchanged. A faceless coarse level (a point cloud at the very
    bottom of the hierarchy) falls back to nearest-vertex weights.
    """
    rows, cols, vals = [], [], []
    kept_set = {int(k): j for j, k in enumerate(kept)}
    if coarse.n_faces == 0:
        for i in range(fine.n_vertices):
            rows.append(i)
            if i in kept_set:
                cols.append(kept_set[i])
            else:
                cols.append(int(np.linalg.norm(coarse.vertices - fine.vertices[i], axis=1).argmin()))
            vals.append(1.0)
        return sp.csr_matrix((vals, (rows, cols)), shape=(fine.n_vertices, coarse.n_vertices))
    bvh = Bvh(coarse)
    d, faces, pts = bvh.query(fine.vertices)
    for i in range(fine.n_vertices):
        if i in kept_set:
            rows.append(i)
            cols.append(kept_set[i])
            vals.append(1.0)
            continue
        f = int(faces[i])
        w = barycentric_on_face(coarse, f, pts[i])
        for j, wj in zip(coarse.faces[f], w):
            if wj > 0.0:
                rows.append(i)
                cols.append(int(j))
                vals.append(float(wj))
    m = sp.csr_matrix((vals, (rows, cols)), shape=(fine.n_vertices, coarse.n_vertices))
    m.sum_duplicates()
    return m


def build_hierarchy(mesh: TriMesh, factor: int = 4, levels: int = 1) -> MeshHierarchy:
    """Chain of `levels` coarser meshes, each ~1/factor the vertex count."""
    mesh.validate()
    out_levels = [mesh]
    down_maps: list[sp.csr_matrix] = []
    up_maps: list[sp.csr_matrix] = []
    keeps: list[np.ndarray] = []
    cur = mesh
    for _ in range(levels):
        target = max(int(round(cur.n_vertices / factor)), 4)
        coarse, kept = _collapse_level(cur, target)
        up = _barycentric_map(cur, coarse, kept)
        # Restriction selects the surviving vertices, so down(up(x)) is exact
        # on coarse-level signals.
        down = sp.csr_matrix(
            (np.ones(len(kept)), (np.arange(len(kept)), kept)),
            shape=(coarse.n_vertices, cur.n_vertices),
        )
        out_levels.append(coarse)
        up_maps.append(up)
        down_maps.append(down)
        keeps.append(kept)
        cur = coarse
    return MeshHierarchy(levels=out_levels, down_maps=down_maps, up_maps=up_maps, keep_indices=keeps)
