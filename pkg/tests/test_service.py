import json
import struct
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from hsi import cvae
from hsi import synthgen as sg
from hsi.geometry import save_scene
from hsi.sdf import build_sdf, save_sdf
from hsi.service import create_app


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    (root / "scenes").mkdir()
    (root / "bodies").mkdir()
    scene = sg.generate_scene(600)
    save_scene(scene, root / "scenes" / "room.ply")
    save_sdf(build_sdf(scene, resolution=48), root / "scenes" / "room.sdf")
    for pose in ("stand", "sit"):
        sg.save_body(sg.generate_body(pose), root / "bodies" / f"{pose}.obj")
    ds = sg.generate_frames(10, 23, n_scenes=1)
    ck = cvae.train(ds, cvae.ModelConfig(), seed=1, epochs=1)
    ck.save(root / "model.hsck")
    return root


@pytest.fixture(scope="module")
def client(data_dir):
    with TestClient(create_app(data_dir)) as c:
        yield c


def parse_wire(raw: bytes):
    nv, nf = struct.unpack_from("<II", raw, 0)
    off = 8
    verts = np.frombuffer(raw, dtype="<f4", count=nv * 3, offset=off).reshape(nv, 3)
    off += nv * 12
    faces = np.frombuffer(raw, dtype="<u4", count=nf * 3, offset=off).reshape(nf, 3)
    off += nf * 12
    labels = np.frombuffer(raw, dtype="<u2", count=nv, offset=off)
    assert off + nv * 2 == len(raw)
    return verts, faces, labels


class TestCatalog:
    def test_scenes_listing(self, client):
        r = client.get("/api/scenes")
        assert r.status_code == 200
        scenes = r.json()["scenes"]
        assert scenes[0]["id"] == "room"
        assert scenes[0]["has_sdf"] is True
        assert scenes[0]["classes"] == sg.CLASS_NAMES

    def test_scene_mesh_wire(self, client, data_dir):
        r = client.get("/api/scene/room/mesh")
        assert r.status_code == 200
        verts, faces, labels = parse_wire(r.content)
        scene = sg.generate_scene(600)
        assert len(verts) == scene.mesh.n_vertices
        assert np.array_equal(labels, scene.labels.astype("<u2"))

    def test_bodies_listing(self, client):
        ids = {b["id"] for b in client.get("/api/bodies").json()["bodies"]}
        assert ids == {"stand", "sit"}

    def test_body_mesh_wire(self, client):
        verts, faces, labels = parse_wire(client.get("/api/body/stand/mesh").content)
        assert len(verts) == 2562
        assert (labels == 0).all()

    def test_unknown_ids_404(self, client):
        assert client.get("/api/scene/nope/mesh").status_code == 404
        assert client.get("/api/body/nope/mesh").status_code == 404
        assert client.get("/api/job/999").status_code == 404


class TestSample:
    def test_sample_returns_full_resolution_summaries(self, client):
        r = client.post("/api/sample", json={"body_id": "stand", "n": 2, "seed": 5})
        assert r.status_code == 200
        doc = r.json()
        assert len(doc["fmap_ids"]) == 2
        assert len(doc["summaries"][0]["contact"]) == 2562
        assert len(doc["summaries"][0]["semantic_class"]) == 2562
        assert doc["class_names"] == sg.CLASS_NAMES

    def test_malformed_body(self, client):
        assert client.post("/api/sample", json={"n": 1}).status_code == 422


class TestPlacement:
    def _sample_fmap(self, client, body="stand", seed=11):
        return client.post("/api/sample", json={"body_id": body, "n": 1,
                                                "seed": seed}).json()["fmap_ids"][0]

    def _wait(self, client, job_id, timeout=120):
        t0 = time.time()
        while time.time() - t0 < timeout:
            doc = client.get(f"/api/job/{job_id}").json()
            if doc["state"] in ("done", "failed", "cancelled"):
                return doc
            time.sleep(0.1)
        raise TimeoutError("job did not finish")

    def test_place_and_refine_from_init(self, client):
        fid = self._sample_fmap(client)
        # run a fresh placement to find a good transform
        r = client.post("/api/place", json={"body_id": "stand", "scene_id": "room",
                                            "fmap_id": fid, "seed": 3, "iters": 30,
                                            "n_seeds": 12})
        assert r.status_code == 200
        doc = self._wait(client, r.json()["job_id"])
        assert doc["state"] == "done"
        tr = doc["result"]["transform"]
        # refining again from the converged transform stays put
        r2 = client.post("/api/place", json={"body_id": "stand", "scene_id": "room",
                                             "fmap_id": fid, "init": tr, "iters": 30})
        doc2 = self._wait(client, r2.json()["job_id"])
        assert doc2["state"] == "done"
        t1 = np.asarray(tr["translation"])
        t2 = np.asarray(doc2["result"]["transform"]["translation"])
        assert doc2["result"]["energies"]["total"] <= doc["result"]["energies"]["total"] + 1e-9

    def test_ws_progress_non_increasing(self, client):
        fid = self._sample_fmap(client, seed=21)
        with client.websocket_connect("/api/ws") as ws:
            r = client.post("/api/place", json={"body_id": "stand", "scene_id": "room",
                                                "fmap_id": fid, "seed": 4, "iters": 40,
                                                "n_seeds": 8})
            job_id = r.json()["job_id"]
            energies = []
            steps = []
            while True:
                ev = json.loads(ws.receive_text())
                if ev.get("job") != job_id:
                    continue
                if ev["type"] == "progress":
                    energies.append(ev["total_energy"])
                    steps.append(ev["step"])
                elif ev["type"] in ("done", "failed", "cancelled"):
                    break
            assert len(energies) >= 2
            assert steps == sorted(steps)
            assert all(b <= a + 1e-9 for a, b in zip(energies, energies[1:]))

    def test_cancellation_returns_partial(self, client):
        fid = self._sample_fmap(client, seed=31)
        with client.websocket_connect("/api/ws") as ws:
            r = client.post("/api/place", json={"body_id": "stand", "scene_id": "room",
                                                "fmap_id": fid, "seed": 5,
                                                "iters": 100000, "n_seeds": 4})
            job_id = r.json()["job_id"]
            # wait for the first progress event, then cancel
            while True:
                ev = json.loads(ws.receive_text())
                if ev.get("job") == job_id and ev["type"] == "progress":
                    break
            rc = client.post(f"/api/job/{job_id}/cancel")
            assert rc.status_code == 200
            doc = TestPlacement._wait(self, client, job_id, timeout=60)
            assert doc["state"] == "cancelled"
            assert doc["result"] is not None  # best-so-far transform survives
            assert "transform" in doc["result"]

    def test_fmap_body_mismatch_409(self, client):
        fid = self._sample_fmap(client, body="sit", seed=41)
        r = client.post("/api/place", json={"body_id": "stand", "scene_id": "room",
                                            "fmap_id": fid})
        assert r.status_code == 409

    def test_unknown_fmap_404(self, client):
        r = client.post("/api/place", json={"body_id": "stand", "scene_id": "room",
                                            "fmap_id": "fmap999999"})
        assert r.status_code == 404

    def test_min_sdf_probe(self, client, data_dir):
        r = client.post("/api/min_sdf", json={
            "scene_id": "room", "body_id": "stand",
            "transform": {"translation": [0, 0, 1.0], "yaw": 0.0}})
        assert r.status_code == 200
        probe = r.json()["min_sdf"]
        from hsi.interaction import canonicalize
        from hsi.placement import PlacementTransform
        from hsi.sdf import load_sdf

        grid = load_sdf(data_dir / "scenes" / "room.sdf")
        body = sg.load_body(data_dir / "bodies" / "stand.obj")
        tr = PlacementTransform(np.array([0, 0, 1.0]), 0.0)
        expect = float(grid.sample(tr.apply(canonicalize(body).posed_vertices())).min())
        assert probe == pytest.approx(expect, abs=1e-4)


class TestCliParity:
    def test_service_matches_library_placement(self, client, data_dir):
        from hsi.geometry import Bvh, load_scene
        from hsi.placement import PlacementWeights, refine, seed_search, upsample_map
        from hsi.sdf import load_sdf

        fid = client.post("/api/sample", json={"body_id": "stand", "n": 1,
                                               "seed": 77}).json()["fmap_ids"][0]
        r = client.post("/api/place", json={"body_id": "stand", "scene_id": "room",
                                            "fmap_id": fid, "seed": 13, "iters": 25,
                                            "n_seeds": 6})
        doc = TestPlacement._wait(TestPlacement(), client, r.json()["job_id"])
        assert doc["state"] == "done"

        ck = cvae.Checkpoint.load(data_dir / "model.hsck")
        body = sg.load_body(data_dir / "bodies" / "stand.obj")
        scene = load_scene(data_dir / "scenes" / "room.ply")
        grid = load_sdf(data_dir / "scenes" / "room.sdf")
        bvh = Bvh(scene.mesh)
        fgen = cvae.sample(ck, body, 1, 77)[0]
        fup = upsample_map(ck, fgen)
        w = PlacementWeights()
        seeds = seed_search(body, fup, scene, grid, w, n_seeds=6, seed=13, bvh=bvh)
        res = refine(body, fup, grid, scene, w, seeds[0][0], iters=25, bvh=bvh)
        got = doc["result"]
        expect = res.to_dict()
        assert json.dumps(got["transform"], sort_keys=True) == \
            json.dumps(expect["transform"], sort_keys=True)
        assert json.dumps(got["energies"], sort_keys=True) == \
            json.dumps(expect["energies"], sort_keys=True)
        assert got["trace"] == expect["trace"]
