"""Local HTTP + WebSocket service for the human-in-the-loop viewer.

Serves scenes, bodies, feature-map sampling and placement jobs over a small
JSON API; meshes go over a binary wire format (u32 vertex count, u32 face
count, f32 positions, u32 indices, u16 labels, little-endian). Placement
jobs run one at a time on a worker thread, stream progress events to all
WebSocket subscribers, and can be cancelled, returning the best-so-far
placement. Placement math is exactly the library code the CLI uses.
"""

from __future__ import annotations

import json
import queue
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import Response
from pydantic import BaseModel

from .cvae import Checkpoint, sample as sample_maps
from .geometry import BodyMesh, Bvh, SceneMesh, load_scene
from .interaction import FeatureMap, canonicalize
from .placement import (
    PlacementTransform,
    PlacementWeights,
    place,
    refine,
    seed_search,
    upsample_map,
)
from .sdf import SdfGrid, load_sdf
from .synthgen import load_body


def mesh_wire(vertices: np.ndarray, faces: np.ndarray, labels: np.ndarray | None) -> bytes:
    nv = len(vertices)
    nf = len(faces)
    out = [struct.pack("<II", nv, nf)]
    out.append(np.asarray(vertices, dtype="<f4").tobytes())
    out.append(np.asarray(faces, dtype="<u4").tobytes())
    if labels is None:
        labels = np.zeros(nv, dtype="<u2")
    out.append(np.asarray(labels, dtype="<u2").tobytes())
    return b"".join(out)


class TransformModel(BaseModel):
    translation: list[float]
    yaw: float
    pose_delta: list[float] | None = None


class SampleRequest(BaseModel):
    body_id: str
    n: int = 1
    seed: int = 0


class PlaceRequest(BaseModel):
    body_id: str
    scene_id: str
    fmap_id: str
    init: TransformModel | None = None
    mode: str = "fixed_pose"
    seed: int = 0
    iters: int = 150
    n_seeds: int = 48


class MinSdfRequest(BaseModel):
    scene_id: str
    body_id: str
    transform: TransformModel


@dataclass
class Job:
    id: int
    state: str = "queued"  # queued | running | done | failed | cancelled
    request: PlaceRequest | None = None
    result: dict | None = None
    error: str | None = None
    cancel: threading.Event = field(default_factory=threading.Event)


class Session:
    """Loaded engine state + job machinery for one service instance."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.scenes: dict[str, SceneMesh] = {}
        self.grids: dict[str, SdfGrid] = {}
        self.bodies: dict[str, BodyMesh] = {}
        self.body_files: dict[str, str] = {}
        self.ckpt: Checkpoint | None = None
        self._bvh: dict[str, Bvh] = {}
        self.fmaps: dict[str, tuple[str, FeatureMap]] = {}
        self._fmap_counter = 0
        self.jobs: dict[int, Job] = {}
        self._job_counter = 0
        self._queue: queue.Queue[int] = queue.Queue()
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()
        self._load()
        self._worker = threading.Thread(target=self._run_jobs, daemon=True)
        self._worker.start()

    def _load(self):
        scene_dir = self.data_dir / "scenes"
        for ply in sorted(scene_dir.glob("*.ply")) if scene_dir.is_dir() else []:
            self.scenes[ply.stem] = load_scene(ply)
            for cand in (ply.with_suffix(".sdf"), self.data_dir / f"{ply.stem}.sdf"):
                if cand.exists():
                    self.grids[ply.stem] = load_sdf(cand)
                    break
        body_dir = self.data_dir / "bodies"
        for obj in sorted(body_dir.glob("*.obj")) if body_dir.is_dir() else []:
            self.bodies[obj.stem] = load_body(obj)
            self.body_files[obj.stem] = str(obj)
        cks = sorted(self.data_dir.glob("*.hsck"))
        if cks:
            self.ckpt = Checkpoint.load(cks[0])

    def bvh(self, scene_id: str) -> Bvh:
        if scene_id not in self._bvh:
            self._bvh[scene_id] = Bvh(self.scenes[scene_id].mesh)
        return self._bvh[scene_id]

    # -- events --------------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue):
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, event: dict):
        with self._lock:
            subs = list(self._subscribers)
        for q in subs:
            q.put(event)

    # -- jobs ----------------------------------------------------------------

    def enqueue(self, req: PlaceRequest) -> Job:
        with self._lock:
            self._job_counter += 1
            job = Job(id=self._job_counter, request=req)
            self.jobs[job.id] = job
        self._queue.put(job.id)
        return job

    def _run_jobs(self):
        while True:
            job_id = self._queue.get()
            job = self.jobs[job_id]
            if job.cancel.is_set():
                job.state = "cancelled"
                self.publish({"type": "cancelled", "job": job.id})
                continue
            job.state = "running"
            try:
                self._execute(job)
            except Exception as exc:  # surfaced through the job record
                job.state = "failed"
                job.error = str(exc)
                self.publish({"type": "failed", "job": job.id, "error": job.error})

    def _execute(self, job: Job):
        req = job.request
        body = self.bodies[req.body_id]
        scene = self.scenes[req.scene_id]
        grid = self.grids[req.scene_id]
        bvh = self.bvh(req.scene_id)
        body_id2, fgen = self.fmaps[req.fmap_id]
        fup = upsample_map(self.ckpt, fgen)
        weights = PlacementWeights()

        def progress(it, total):
            self.publish({"type": "progress", "job": job.id, "step": int(it),
                          "total_energy": float(total)})

        if req.init is not None:
            init = PlacementTransform(np.asarray(req.init.translation, float),
                                      req.init.yaw,
                                      None if req.init.pose_delta is None else
                                      np.asarray(req.init.pose_delta, float).reshape(-1, 3))
        else:
            seeds = seed_search(body, fup, scene, grid, weights, n_seeds=req.n_seeds,
                                seed=req.seed, bvh=bvh)
            init = seeds[0][0]
        res = refine(body, fup, grid, scene, weights, init, mode=req.mode,
                     iters=req.iters, bvh=bvh, progress=progress,
                     should_stop=job.cancel.is_set)
        doc = res.to_dict()
        doc["body_file"] = self.body_files.get(req.body_id, req.body_id)
        job.result = doc
        if job.cancel.is_set():
            job.state = "cancelled"
            self.publish({"type": "cancelled", "job": job.id, "result": doc})
        else:
            job.state = "done"
            self.publish({"type": "done", "job": job.id, "result": doc})


def create_app(data_dir, viewer_dir=None) -> FastAPI:
    app = FastAPI(title="hsi service")
    session = Session(Path(data_dir))
    app.state.session = session

    def get_scene(scene_id: str) -> SceneMesh:
        if scene_id not in session.scenes:
            raise HTTPException(404, f"unknown scene {scene_id!r}")
        return session.scenes[scene_id]

    def get_body(body_id: str) -> BodyMesh:
        if body_id not in session.bodies:
            raise HTTPException(404, f"unknown body {body_id!r}")
        return session.bodies[body_id]

    @app.get("/api/scenes")
    def scenes():
        return {"scenes": [
            {"id": sid, "classes": s.class_names, "n_vertices": s.mesh.n_vertices,
             "has_sdf": sid in session.grids}
            for sid, s in session.scenes.items()
        ]}

    @app.get("/api/scene/{scene_id}/mesh")
    def scene_mesh(scene_id: str):
        s = get_scene(scene_id)
        return Response(mesh_wire(s.mesh.vertices, s.mesh.faces, s.labels),
                        media_type="application/octet-stream")

    @app.get("/api/bodies")
    def bodies():
        return {"bodies": [
            {"id": bid, "n_vertices": b.mesh.n_vertices, "topology": b.topology}
            for bid, b in session.bodies.items()
        ]}

    @app.get("/api/body/{body_id}/mesh")
    def body_mesh(body_id: str):
        b = get_body(body_id)
        canon = canonicalize(b)
        return Response(mesh_wire(canon.posed_vertices(), b.mesh.faces, None),
                        media_type="application/octet-stream")

    @app.post("/api/sample")
    def sample(req: SampleRequest):
        body = get_body(req.body_id)
        if session.ckpt is None:
            raise HTTPException(409, "no checkpoint loaded")
        if body.mesh.n_vertices != session.ckpt.hierarchy.levels[0].n_vertices:
            raise HTTPException(409, "body topology does not match the checkpoint")
        maps = sample_maps(session.ckpt, body, req.n, req.seed)
        ids = []
        summaries = []
        for m in maps:
            session._fmap_counter += 1
            fid = f"fmap{session._fmap_counter}"
            session.fmaps[fid] = (req.body_id, m)
            ids.append(fid)
            up = upsample_map(session.ckpt, m)
            summaries.append({
                "contact": [round(float(c), 5) for c in up.contact],
                "semantic_class": [int(i) for i in up.semantics.argmax(axis=1)],
            })
        return {"fmap_ids": ids, "summaries": summaries,
                "class_names": session.ckpt.class_names}

    @app.post("/api/place")
    def place_endpoint(req: PlaceRequest):
        get_body(req.body_id)
        get_scene(req.scene_id)
        if req.scene_id not in session.grids:
            raise HTTPException(409, f"scene {req.scene_id!r} has no SDF")
        if req.fmap_id not in session.fmaps:
            raise HTTPException(404, f"unknown feature map {req.fmap_id!r}")
        if session.fmaps[req.fmap_id][0] != req.body_id:
            raise HTTPException(409, "feature map was sampled for a different body")
        if req.mode not in ("fixed_pose", "full"):
            raise HTTPException(422, f"bad mode {req.mode!r}")
        job = session.enqueue(req)
        return {"job_id": job.id, "state": job.state}

    @app.get("/api/job/{job_id}")
    def job_state(job_id: int):
        job = session.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id}")
        return {"id": job.id, "state": job.state, "result": job.result, "error": job.error}

    @app.post("/api/job/{job_id}/cancel")
    def job_cancel(job_id: int):
        job = session.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id}")
        job.cancel.set()
        if job.state == "queued":
            job.state = "cancelled"
        return {"id": job.id, "state": job.state}

    @app.post("/api/min_sdf")
    def min_sdf(req: MinSdfRequest):
        body = get_body(req.body_id)
        get_scene(req.scene_id)
        if req.scene_id not in session.grids:
            raise HTTPException(409, f"scene {req.scene_id!r} has no SDF")
        tr = PlacementTransform(np.asarray(req.transform.translation, float),
                                req.transform.yaw)
        canon = canonicalize(body)
        d = session.grids[req.scene_id].sample(tr.apply(canon.posed_vertices()))
        return {"min_sdf": float(d.min())}

    @app.websocket("/api/ws")
    async def ws(sock: WebSocket):
        import anyio

        def poll():
            try:
                return session_queue.get(timeout=0.1)
            except queue.Empty:
                return None

        await sock.accept()
        session_queue = session.subscribe()
        try:
            while True:
                event = await anyio.to_thread.run_sync(poll)
                if event is not None:
                    await sock.send_text(json.dumps(event, sort_keys=True))
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            session.unsubscribe(session_queue)

    if viewer_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(viewer_dir), html=True), name="viewer")

    return app
