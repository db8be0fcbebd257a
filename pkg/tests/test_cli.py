import json

import pytest

from hsi.cli import main


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Mini end-to-end pipeline through the CLI entry point."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["gen-data", "--frames", "10", "--scenes", "1", "--seed", "7",
                 "--out", str(data)]) == 0
    scene = data / "scenes" / "scene0.ply"
    sdf = data / "scene0.sdf"
    assert main(["build-sdf", "--scene", str(scene), "--res", "48",
                 "--out", str(sdf)]) == 0
    ckpt = root / "model.hsck"
    assert main(["train", "--data", str(data / "dataset.posa"), "--out", str(ckpt),
                 "--epochs", "1", "--seed", "7", "--max-steps", "2"]) == 0
    places = root / "placements"
    places.mkdir()
    for s in (1, 2):
        assert main(["place", "--model", str(ckpt), "--body", str(data / "bodies" / "stand.obj"),
                     "--scene", str(scene), "--sdf", str(sdf), "--seed", str(s),
                     "--n-samples", "1", "--n-seeds", "4", "--iters", "10",
                     "--out", str(places / f"p{s}.json")]) == 0
    return root, data, scene, sdf, ckpt, places


class TestUsage:
    def test_missing_required_flag_exits_1(self, capsys):
        rc = main(["place", "--body", "x.obj", "--scene", "s.ply", "--sdf", "g.sdf",
                   "--out", "o.json"])
        assert rc == 1
        err = capsys.readouterr().err
        assert "--model" in err

    def test_unknown_flag_rejected(self, capsys):
        rc = main(["build-sdf", "--scene", "x.ply", "--out", "y", "--frobnicate"])
        assert rc == 1

    def test_missing_input_file_exits_2(self, tmp_path, capsys):
        rc = main(["build-sdf", "--scene", str(tmp_path / "missing.ply"),
                   "--out", str(tmp_path / "o.sdf")])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestPipeline:
    def test_gen_data_outputs(self, pipeline):
        root, data, *_ = pipeline
        assert (data / "dataset.posa").exists()
        assert (data / "scenes" / "scene0.ply").exists()
        assert (data / "bodies" / "stand.obj").exists()
        assert (data / "bodies" / "stand.json").exists()
        report = json.loads((data / "report.json").read_text())
        assert report["frames"] >= 8

    def test_extract_features_standalone(self, pipeline, tmp_path):
        root, data, scene, *_ = pipeline
        out = tmp_path / "f.posa"
        rc = main(["extract-features", "--scene", str(scene),
                   "--body", str(data / "bodies" / "stand.obj"),
                   "--body", str(data / "bodies" / "sit.obj"),
                   "--out", str(out)])
        assert rc == 0
        from hsi.interaction import read_dataset

        ds = read_dataset(out)
        assert len(ds) == 2
        assert ds.class_names[0] == "floor"

    def test_placement_json_schema(self, pipeline):
        *_, places = pipeline
        doc = json.loads((places / "p1.json").read_text())
        assert set(doc["transform"]) >= {"translation", "yaw"}
        assert set(doc["energies"]) == {"afford_contact", "afford_semantic", "pen",
                                        "reg", "total"}
        assert isinstance(doc["alternatives"], list)
        assert isinstance(doc["converged"], bool)

    def test_eval_json_schema(self, pipeline, tmp_path, capsys):
        root, data, scene, sdf, ckpt, places = pipeline
        out = tmp_path / "report.json"
        rc = main(["--json", "eval", "--placements", str(places), "--sdf", str(sdf),
                   "--out", str(out), "--k", "2"])
        assert rc == 0
        stdout = capsys.readouterr().out
        parsed = json.loads(stdout.strip().splitlines()[-1])
        assert {"non_collision_mean", "contact_mean", "entropy", "cluster_size"} <= set(parsed)
        report = json.loads(out.read_text())
        assert 0.0 <= report["non_collision_mean"] <= 1.0
        assert report["entropy_base"] == "nats"

    def test_sample_command(self, pipeline, tmp_path):
        root, data, scene, sdf, ckpt, _ = pipeline
        out = tmp_path / "maps.json"
        rc = main(["sample", "--model", str(ckpt), "--body", str(data / "bodies" / "sit.obj"),
                   "-n", "2", "--seed", "3", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert len(doc["samples"]) == 2
        assert len(doc["samples"][0]["contact"]) == doc["resolution"]

    def test_repeat_invocation_identical_output(self, pipeline, tmp_path):
        root, data, scene, sdf, ckpt, _ = pipeline
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            assert main(["place", "--model", str(ckpt),
                         "--body", str(data / "bodies" / "stand.obj"),
                         "--scene", str(scene), "--sdf", str(sdf), "--seed", "5",
                         "--n-samples", "1", "--n-seeds", "3", "--iters", "8",
                         "--out", str(out)]) == 0
        ja = json.loads(a.read_text())
        jb = json.loads(b.read_text())
        ja.pop("body_file"), jb.pop("body_file")
        ja.pop("scene_file"), jb.pop("scene_file")
        assert json.dumps(ja, sort_keys=True) == json.dumps(jb, sort_keys=True)
