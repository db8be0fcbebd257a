"""Placing a posed body into a scene by minimizing the affordance energy.

The energy couples a sampled body feature map with the scene:

  contact  : l1 * sum_i (c_i * d_i)^2, d_i the signed SDF at vertex i
  semantic : l2 * sum_i CCE(generated semantics_i, observed one-hot_i)
  pen      : l_pen * sum_{d_i < 0} d_i^2
  reg      : l_reg * ||pose_delta||^2

Discrete seed search scores full energies over random rigid placements;
continuous refinement runs Adam on translation, yaw (and optionally bounded
per-joint pose deltas) through the SDF's trilinear gradients. The semantic
term is piecewise constant in the transform, so it ranks seeds and reported
candidates but contributes no gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as hsrng
from .autodiff import CLAMP, AdamState, adam_step
from .cvae import Checkpoint, conditioning_vertices, sample as sample_maps
from .geometry import BodyMesh, Bvh, SceneMesh, up_axis, wrap_angle, yaw_matrix
from .interaction import (
    CONTACT_THRESHOLD,
    FeatureMap,
    VOID_CLASS,
    canonicalize,
    face_majority_labels,
)
from .sdf import SdfGrid

POSE_DELTA_CAP = 0.3  # radians per joint axis


class PlacementError(ValueError):
    pass


@dataclass
class PlacementWeights:
    l1: float = 1.0
    l2: float = 0.5
    l_pen: float = 10.0
    l_reg: float = 1.0
    semantic_gate: bool = False  # weight per-vertex CCE by generated contact

    def __post_init__(self):
        for name in ("l1", "l2", "l_pen", "l_reg"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise PlacementError(f"weight {name} must be finite and >= 0")


@dataclass
class PlacementTransform:
    translation: np.ndarray  # (3,)
    yaw: float
    pose_delta: np.ndarray | None = None  # (J, 3) axis-angle perturbations

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64)
        self.yaw = wrap_angle(float(self.yaw))
        if self.pose_delta is not None:
            self.pose_delta = np.clip(np.asarray(self.pose_delta, dtype=np.float64),
                                      -POSE_DELTA_CAP, POSE_DELTA_CAP)

    def apply(self, verts: np.ndarray) -> np.ndarray:
        return verts @ yaw_matrix(self.yaw).T + self.translation

    def to_dict(self) -> dict:
        d = {"translation": [float(x) for x in self.translation], "yaw": float(self.yaw)}
        if self.pose_delta is not None:
            d["pose_delta"] = [float(x) for x in self.pose_delta.ravel()]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlacementTransform":
        pd = d.get("pose_delta")
        return cls(np.asarray(d["translation"], float), float(d["yaw"]),
                   None if pd is None else np.asarray(pd, float).reshape(-1, 3))


@dataclass
class PlacementResult:
    transform: PlacementTransform
    energies: dict  # afford_contact, afford_semantic, pen, reg, total
    trace: list  # (iteration, best total energy so far)
    converged: bool
    clamped_vertices: int = 0
    map_index: int = 0

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.to_dict(),
            "energies": {k: float(v) for k, v in self.energies.items()},
            "converged": bool(self.converged),
            "clamped_vertices": int(self.clamped_vertices),
            "map_index": int(self.map_index),
            "trace": [[int(i), float(e)] for i, e in self.trace],
        }


def upsample_map(ckpt: Checkpoint, fgen: FeatureMap) -> FeatureMap:
    """Interpolate a feature-resolution map to full body resolution."""
    up = ckpt.hierarchy.up_maps[0]
    return FeatureMap(up @ fgen.contact, up @ fgen.semantics)


def observed_semantics(verts: np.ndarray, scene: SceneMesh, bvh: Bvh,
                       signed_dist: np.ndarray,
                       threshold: float = CONTACT_THRESHOLD) -> np.ndarray:
    """Per-vertex observed one-hot over void + scene classes.

    Vertices whose signed distance exceeds the contact threshold observe
    "void", mirroring the training-time labeling convention.
    """
    _, faces, _ = bvh.query(verts)
    labels = face_majority_labels(scene, faces)
    onehot = np.zeros((len(verts), scene.n_classes + 1))
    touching = signed_dist <= threshold
    onehot[~touching, VOID_CLASS] = 1.0
    onehot[touching, labels[touching] + 1] = 1.0
    return onehot


def energy(verts: np.ndarray, fgen_full: FeatureMap, grid: SdfGrid, scene: SceneMesh,
           bvh: Bvh, weights: PlacementWeights,
           pose_delta: np.ndarray | None = None,
           threshold: float = CONTACT_THRESHOLD) -> tuple[dict, int]:
    """Full energy breakdown at given world-space vertices.

    Returns (breakdown dict, number of boundary-clamped SDF samples).
    """
    if fgen_full.resolution != len(verts):
        raise PlacementError(
            f"feature map resolution {fgen_full.resolution} does not match "
            f"{len(verts)} body vertices (upsample first)"
        )
    d = grid.sample(verts)
    lo = grid.interior_min
    hi = grid.interior_max
    clamped = int(((verts < lo) | (verts > hi)).any(axis=1).sum())
    c = fgen_full.contact
    afford_contact = weights.l1 * float(((c * d) ** 2).sum())
    obs = observed_semantics(verts, scene, bvh, d, threshold)
    q = np.clip(fgen_full.semantics, CLAMP, 1.0 - CLAMP)
    cce = -(obs * np.log(q)).sum(axis=1)
    if weights.semantic_gate:
        cce = cce * c
    afford_semantic = weights.l2 * float(cce.sum())
    pen = weights.l_pen * float((np.minimum(d, 0.0) ** 2).sum())
    reg = 0.0
    if pose_delta is not None:
        reg = weights.l_reg * float((np.asarray(pose_delta) ** 2).sum())
    total = afford_contact + afford_semantic + pen + reg
    return (
        {"afford_contact": afford_contact, "afford_semantic": afford_semantic,
         "pen": pen, "reg": reg, "total": total},
        clamped,
    )


def _canonical_body(body: BodyMesh) -> BodyMesh:
    return canonicalize(body)


def _local_vertices(body: BodyMesh, pose_delta: np.ndarray | None) -> np.ndarray:
    """Canonical-frame vertices (yaw/horizontal offset already stripped)."""
    return body.posed_vertices(pose_delta)


def seed_search(body: BodyMesh, fgen_full: FeatureMap, scene: SceneMesh, grid: SdfGrid,
                weights: PlacementWeights, n_seeds: int, seed: int,
                bvh: Bvh | None = None,
                threshold: float = CONTACT_THRESHOLD) -> list[tuple[PlacementTransform, float]]:
    """Random rigid placements ranked by full energy (ascending).

    Translations sample the scene bounding box at the body's canonical
    height; yaw is uniform over (-pi, pi]. Deterministic per seed.
    """
    if n_seeds < 1:
        raise PlacementError("n_seeds must be >= 1")
    bvh = bvh or Bvh(scene.mesh)
    canon = _canonical_body(body)
    local = _local_vertices(canon, None)
    g = hsrng.generator(seed, "placement-seeds")
    lo = scene.mesh.vertices.min(axis=0)
    hi = scene.mesh.vertices.max(axis=0)
    up = up_axis()
    horiz = [a for a in range(3) if a != up]
    margin = 0.3
    scored: list[tuple[float, int, PlacementTransform]] = []
    for k in range(n_seeds):
        t = np.zeros(3)
        for a in horiz:
            span = max(hi[a] - lo[a] - 2 * margin, 0.1)
            t[a] = g.uniform(lo[a] + margin, lo[a] + margin + span)
        yaw = g.uniform(-np.pi, np.pi)
        tr = PlacementTransform(t, yaw)
        e, _ = energy(tr.apply(local), fgen_full, grid, scene, bvh, weights,
                      threshold=threshold)
        if np.isfinite(e["total"]):
            scored.append((e["total"], k, tr))
    if not scored:
        raise PlacementError("no seed produced a finite energy")
    scored.sort(key=lambda s: (s[0], s[1]))
    return [(tr, val) for val, _, tr in scored]


def differentiable_energy(local: np.ndarray, tau: np.ndarray, yaw: float,
                          contact: np.ndarray, grid: SdfGrid,
                          weights: PlacementWeights):
    """Contact + penetration energy and its gradients w.r.t. (tau, yaw).

    `local` are canonical-frame vertices; the semantic term is piecewise
    constant in the transform and not part of this function.
    """
    r = yaw_matrix(yaw)
    x = local @ r.T + tau
    d = grid.sample(x)
    gradd, _ = grid.sample_gradient(x)
    c = contact
    value = (weights.l1 * float(((c * d) ** 2).sum())
             + weights.l_pen * float((np.minimum(d, 0.0) ** 2).sum()))
    dE_dd = 2.0 * weights.l1 * (c ** 2) * d + 2.0 * weights.l_pen * np.minimum(d, 0.0)
    dE_dx = dE_dd[:, None] * gradd
    g_tau = dE_dx.sum(axis=0)
    up = up_axis()
    i, j = (up + 1) % 3, (up + 2) % 3
    dr = np.zeros((3, 3))
    cy, sy = np.cos(yaw), np.sin(yaw)
    dr[i, i] = -sy
    dr[i, j] = -cy
    dr[j, i] = cy
    dr[j, j] = -sy
    g_yaw = float((dE_dx * (local @ dr.T)).sum())
    return value, g_tau, g_yaw, dE_dx


def _skin_jacobian(body: BodyMesh, pose_delta: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """d(local vertices)/d(pose delta) by central differences, (P, V, 3)."""
    n = pose_delta.size
    out = np.empty((n, body.mesh.n_vertices, 3))
    flat = pose_delta.ravel()
    for i in range(n):
        orig = flat[i]
        flat[i] = orig + h
        vp = _local_vertices(body, pose_delta)
        flat[i] = orig - h
        vm = _local_vertices(body, pose_delta)
        flat[i] = orig
        out[i] = (vp - vm) / (2 * h)
    return out


def refine(body: BodyMesh, fgen_full: FeatureMap, grid: SdfGrid, scene: SceneMesh,
           weights: PlacementWeights, init: PlacementTransform,
           mode: str = "fixed_pose", iters: int = 150, lr: float = 0.02,
           bvh: Bvh | None = None, threshold: float = CONTACT_THRESHOLD,
           eval_every: int = 5, progress=None, should_stop=None) -> PlacementResult:
    """Adam refinement of the placement from `init`.

    mode "full" also optimizes bounded per-joint pose deltas with the
    ||pose_delta||^2 regularizer; "fixed_pose" keeps the articulation rigid.
    The best candidate by full energy (init included) is returned, so the
    result never ranks worse than its initialization.
    """
    if mode not in ("full", "fixed_pose"):
        raise PlacementError(f"unknown refine mode {mode!r}")
    if not (np.all(np.isfinite(init.translation)) and np.isfinite(init.yaw)):
        raise PlacementError("init transform must be finite")
    bvh = bvh or Bvh(scene.mesh)
    canon = _canonical_body(body)
    full_pose = mode == "full" and canon.skeleton is not None
    n_joints = canon.skeleton.n_joints if full_pose else 0

    params = {"tau": init.translation.copy(), "yaw": np.array([init.yaw])}
    if full_pose:
        pd0 = (init.pose_delta if init.pose_delta is not None
               else np.zeros((n_joints, 3)))
        params["delta"] = pd0.ravel().copy()

    local = _local_vertices(canon, params["delta"].reshape(n_joints, 3) if full_pose else None)
    state = AdamState(lr=lr)

    def snapshot() -> PlacementTransform:
        return PlacementTransform(
            params["tau"].copy(), float(params["yaw"][0]),
            params["delta"].reshape(n_joints, 3).copy() if full_pose else None,
        )

    def full_energy(tr: PlacementTransform):
        lv = _local_vertices(canon, tr.pose_delta) if full_pose else local
        return energy(tr.apply(lv), fgen_full, grid, scene, bvh, weights,
                      pose_delta=tr.pose_delta, threshold=threshold)

    best_tr = snapshot()
    best_e, best_clamped = full_energy(best_tr)
    trace: list[tuple[int, float]] = [(0, best_e["total"])]
    if progress:
        progress(0, best_e["total"])
    converged = True
    stopped = False

    for it in range(1, iters + 1):
        if should_stop is not None and should_stop():
            stopped = True
            break
        if full_pose:
            delta = params["delta"].reshape(n_joints, 3)
            local = _local_vertices(canon, delta)
        yawv = float(params["yaw"][0])
        diffe, g_tau, g_yaw, dE_dx = differentiable_energy(
            local, params["tau"], yawv, fgen_full.contact, grid, weights)
        grads = {"tau": g_tau, "yaw": np.array([g_yaw])}
        if full_pose:
            jac = _skin_jacobian(canon, params["delta"].reshape(n_joints, 3))
            rotated = jac @ yaw_matrix(yawv).T  # (P, V, 3)
            g_delta = (rotated * dE_dx[None]).sum(axis=(1, 2))
            grads["delta"] = g_delta + 2.0 * weights.l_reg * params["delta"]
        if not np.isfinite(diffe) or diffe > 1e12:
            converged = False
            break
        params = adam_step(state, params, grads)
        params["yaw"][0] = wrap_angle(float(params["yaw"][0]))
        if full_pose:
            params["delta"] = np.clip(params["delta"], -POSE_DELTA_CAP, POSE_DELTA_CAP)
        if it % eval_every == 0 or it == iters:
            tr = snapshot()
            e, clamped = full_energy(tr)
            if e["total"] < best_e["total"]:
                best_tr, best_e, best_clamped = tr, e, clamped
            trace.append((it, best_e["total"]))
            if progress:
                progress(it, best_e["total"])

    return PlacementResult(transform=best_tr, energies=best_e, trace=trace,
                           converged=converged and not stopped,
                           clamped_vertices=best_clamped)


def place(ckpt: Checkpoint, body: BodyMesh, scene: SceneMesh, grid: SdfGrid,
          weights: PlacementWeights | None = None, n_samples: int = 4,
          n_seeds: int = 48, seed: int = 0, mode: str = "fixed_pose",
          iters: int = 150, bvh: Bvh | None = None,
          threshold: float = CONTACT_THRESHOLD,
          init: PlacementTransform | None = None,
          progress=None, should_stop=None) -> tuple[PlacementResult, list[PlacementResult]]:
    """Sample feature maps, search seeds, refine, return the best placement.

    With `init` given the seed search is skipped and each sampled map refines
    from the user transform (the rough-then-refine loop).
    """
    weights = weights or PlacementWeights()
    bvh = bvh or Bvh(scene.mesh)
    maps = sample_maps(ckpt, body, n_samples, seed)
    if not maps:
        raise PlacementError("n_samples must be >= 1")
    results: list[PlacementResult] = []
    for mi, fgen in enumerate(maps):
        fup = upsample_map(ckpt, fgen)
        if init is None:
            seeds = seed_search(body, fup, scene, grid, weights,
                                n_seeds=n_seeds, seed=hash_seed(seed, f"map{mi}"),
                                bvh=bvh, threshold=threshold)
            start = seeds[0][0]
        else:
            start = init
        res = refine(body, fup, grid, scene, weights, start, mode=mode, iters=iters,
                     bvh=bvh, threshold=threshold, progress=progress,
                     should_stop=should_stop)
        res.map_index = mi
        results.append(res)
        if should_stop is not None and should_stop():
            break
    order = sorted(range(len(results)),
                   key=lambda i: (results[i].energies["total"], i))
    best = results[order[0]]
    return best, [results[i] for i in order]


def hash_seed(seed: int, label: str) -> int:
    return int(hsrng.generator(seed, label).integers(2 ** 31))


def result_to_json(result: PlacementResult, alternatives: list[PlacementResult],
                   body_file: str | None = None, extra: dict | None = None) -> str:
    doc = result.to_dict()
    doc["alternatives"] = [r.to_dict() for r in alternatives]
    if body_file is not None:
        doc["body_file"] = body_file
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=1)
