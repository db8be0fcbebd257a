"""Command-line pipeline: gen-data, build-sdf, extract-features, train,
sample, place, eval, serve.

Exit codes: 0 success, 1 usage error, 2 runtime failure. `--json` prints a
machine-readable result to stdout. All randomness derives from `--seed`;
`--threads 1` pins the BLAS pools for bit-reproducible runs. The engine
modules are imported after thread setup, so keep heavy imports out of this
module's top level. Log level comes from the HSI_LOG environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("hsi")


class UsageError(SystemExit):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _setup_threads(n: int | None):
    if n is None:
        return
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[var] = str(n)


def _setup_logging():
    level = os.environ.get("HSI_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _log_config(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    log.info("resolved config: %s", json.dumps(cfg, sort_keys=True, default=str))


def _emit(args, doc: dict):
    if getattr(args, "json", False):
        print(json.dumps(doc, sort_keys=True))


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    import numpy as np

    from .geometry import save_scene
    from .interaction import write_dataset
    from .synthgen import (
        POSE_NAMES, generate_body, generate_frames, generate_scene, save_body,
    )
    from . import rng as hsrng

    out = Path(args.out)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    (out / "bodies").mkdir(parents=True, exist_ok=True)
    for k in range(args.scenes):
        scene_seed = int(hsrng.generator(args.seed, f"scene-seed-{k}").integers(2 ** 31))
        save_scene(generate_scene(scene_seed), out / "scenes" / f"scene{k}.ply")
    for pose in POSE_NAMES:
        save_body(generate_body(pose), out / "bodies" / f"{pose.replace('-', '_')}.obj")
    skipped: list = []
    ds = generate_frames(args.frames, args.seed, n_scenes=args.scenes,
                         threshold=args.threshold, report=skipped)
    write_dataset(ds, out / "dataset.posa")
    report = {"frames": len(ds), "requested": args.frames, "skipped": skipped,
              "scenes": args.scenes, "seed": args.seed}
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    log.info("wrote %d frames to %s", len(ds), out / "dataset.posa")
    _emit(args, report)
    return 0


def cmd_build_sdf(args) -> int:
    from .geometry import load_scene
    from .sdf import build_sdf, save_sdf

    scene = load_scene(args.scene)
    diag = float(((scene.mesh.vertices.max(0) - scene.mesh.vertices.min(0)) ** 2).sum() ** 0.5)
    grid = build_sdf(scene, resolution=args.res, padding=args.pad * diag)
    save_sdf(grid, args.out)
    doc = {"dims": [int(d) for d in grid.dims], "cell_size": grid.cell_size,
           "out": str(args.out)}
    log.info("sdf %s", doc)
    _emit(args, doc)
    return 0


def cmd_extract_features(args) -> int:
    from .geometry import Bvh, load_scene
    from .interaction import InteractionDataset, canonicalize, extract_features, write_dataset
    from .synthgen import get_topology, load_body

    scene = load_scene(args.scene)
    bvh = Bvh(scene.mesh)
    frames = []
    topology = None
    for bpath in args.body:
        body = load_body(bpath)
        topo = get_topology(body.topology)
        if topology is None:
            topology = body.topology
        elif body.topology != topology:
            raise ValueError("all bodies must share one topology")
        feat = topo.to_feature(body.posed_vertices())
        _, fmap = extract_features(body, scene, bvh, args.threshold, vertices=feat)
        canon = canonicalize(body)
        frames.append((topo.to_feature(canon.posed_vertices()), fmap))
    ds = InteractionDataset(frames, scene.class_names, topology or "external")
    write_dataset(ds, args.out)
    _emit(args, {"frames": len(frames), "out": str(args.out)})
    return 0


def cmd_train(args) -> int:
    from .cvae import ModelConfig, train
    from .interaction import read_dataset

    ds = read_dataset(args.data)
    cfg = ModelConfig(latent_dim=args.latent, alpha=args.alpha, lr=args.lr,
                      batch_size=args.batch, n_classes=len(ds.class_names),
                      spiral_length=args.spiral_length)
    ck = train(ds, cfg, seed=args.seed, epochs=args.epochs, max_steps=args.max_steps,
               stop_contact_accuracy=args.stop_acc,
               log_fn=(lambda m: log.info("%s", m)))
    ck.save(args.out)
    doc = {"steps": ck.metadata["steps"], "out": str(args.out),
           "final_loss": float(ck.metadata["loss_curve"][-1, 0]) if ck.metadata["steps"] else None,
           "val_loss": ck.metadata.get("val_loss")}
    log.info("train %s", doc)
    _emit(args, doc)
    return 0


def cmd_sample(args) -> int:
    from .cvae import Checkpoint, sample
    from .synthgen import load_body

    ck = Checkpoint.load(args.model)
    body = load_body(args.body)
    maps = sample(ck, body, args.n, args.seed, mode=args.mode)
    doc = {
        "class_names": ck.class_names,
        "resolution": ck.feature_resolution,
        "samples": [
            {"contact": [round(float(c), 6) for c in m.contact],
             "semantic_class": [int(i) for i in m.semantic_ids()]}
            for m in maps
        ],
    }
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=1))
    _emit(args, {"n": len(maps), "out": str(args.out)})
    return 0


def cmd_place(args) -> int:
    from .cvae import Checkpoint
    from .geometry import Bvh, load_scene
    from .placement import PlacementWeights, place, result_to_json
    from .sdf import load_sdf
    from .synthgen import load_body

    ck = Checkpoint.load(args.model)
    body = load_body(args.body)
    scene = load_scene(args.scene)
    grid = load_sdf(args.sdf)
    weights = PlacementWeights(l1=args.l1, l2=args.l2, l_pen=args.l_pen, l_reg=args.l_reg)
    best, alts = place(ck, body, scene, grid, weights=weights, n_samples=args.n_samples,
                       n_seeds=args.n_seeds, seed=args.seed, mode=args.mode,
                       iters=args.iters, bvh=Bvh(scene.mesh))
    doc = result_to_json(best, alts, body_file=str(args.body),
                         extra={"scene_file": str(args.scene), "seed": args.seed})
    Path(args.out).write_text(doc)
    _emit(args, {"total": best.energies["total"], "out": str(args.out)})
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from .interaction import canonicalize
    from .metrics import diversity, plausibility
    from .placement import PlacementTransform
    from .sdf import load_sdf
    from .synthgen import load_body

    grid = load_sdf(args.sdf)
    pdir = Path(args.placements)
    files = sorted(pdir.glob("*.json")) if pdir.is_dir() else [pdir]
    if not files:
        raise FileNotFoundError(f"no placement JSONs under {args.placements}")
    bodies = []
    vectors = []
    for f in files:
        doc = json.loads(f.read_text())
        tr = PlacementTransform.from_dict(doc["transform"])
        bpath = Path(doc["body_file"])
        if not bpath.is_absolute():
            bpath = (f.parent / bpath).resolve()
            if not bpath.exists():
                bpath = Path(doc["body_file"]).resolve()
        body = load_body(bpath)
        canon = canonicalize(body)
        local = canon.posed_vertices(tr.pose_delta)
        bodies.append(tr.apply(local))
        pd = tr.pose_delta.ravel() if tr.pose_delta is not None else np.zeros(0)
        vectors.append(np.concatenate([tr.translation, [tr.yaw], pd]))
    rep = plausibility(bodies, grid)
    width = max(len(v) for v in vectors)
    mat = np.zeros((len(vectors), width))
    for i, v in enumerate(vectors):
        mat[i, : len(v)] = v
    doc = {
        "non_collision_mean": rep.non_collision_mean,
        "contact_mean": rep.contact_mean,
        "n_bodies": len(bodies),
        "entropy": None,
        "cluster_size": None,
        "k": args.k,
        "entropy_base": "nats",
        "non_collision": [float(x) for x in rep.non_collision],
        "contact": [int(x) for x in rep.contact],
    }
    if len(vectors) >= args.k:
        div = diversity(mat, k=args.k, seed=args.seed)
        doc["entropy"] = div.entropy
        doc["cluster_size"] = div.cluster_size
        doc["histogram"] = [int(h) for h in div.histogram]
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=1))
    _emit(args, {"non_collision_mean": doc["non_collision_mean"],
                 "contact_mean": doc["contact_mean"],
                 "entropy": doc["entropy"], "cluster_size": doc["cluster_size"]})
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(Path(args.data), viewer_dir=args.viewer)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> Parser:
    p = Parser(prog="hsi", description=__doc__)
    p.add_argument("--threads", type=int, default=None,
                   help="cap engine/BLAS threads (1 = bit-deterministic)")
    p.add_argument("--json", action="store_true", help="machine-readable result on stdout")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate synthetic scenes, bodies and a dataset")
    g.add_argument("--frames", type=int, required=True)
    g.add_argument("--scenes", type=int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threshold", type=float, default=0.05)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    b = sub.add_parser("build-sdf", help="voxelize a scene's signed distance field")
    b.add_argument("--scene", required=True)
    b.add_argument("--res", type=int, default=128)
    b.add_argument("--pad", type=float, default=0.1, help="padding as a fraction of the bbox diagonal")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_sdf)

    x = sub.add_parser("extract-features", help="contact/semantic features for bodies in a scene")
    x.add_argument("--scene", required=True)
    x.add_argument("--body", action="append", required=True)
    x.add_argument("--threshold", type=float, default=0.05)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_extract_features)

    t = sub.add_parser("train", help="train the feature-map cVAE")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--alpha", type=float, default=0.1)
    t.add_argument("--latent", type=int, default=256)
    t.add_argument("--spiral-length", type=int, default=9)
    t.add_argument("--max-steps", type=int, default=None)
    t.add_argument("--stop-acc", type=float, default=None)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="sample feature maps for a body")
    s.add_argument("--model", required=True)
    s.add_argument("--body", required=True)
    s.add_argument("-n", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", action="store_true", help="decode z=0 instead of sampling")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    pl = sub.add_parser("place", help="place a body into a scene")
    pl.add_argument("--model", required=True)
    pl.add_argument("--body", required=True)
    pl.add_argument("--scene", required=True)
    pl.add_argument("--sdf", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--n-samples", type=int, default=4)
    pl.add_argument("--n-seeds", type=int, default=48)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--iters", type=int, default=150)
    pl.add_argument("--mode", choices=["fixed_pose", "full"], default="fixed_pose")
    pl.add_argument("--l1", type=float, default=1.0)
    pl.add_argument("--l2", type=float, default=0.5)
    pl.add_argument("--l-pen", type=float, default=10.0)
    pl.add_argument("--l-reg", type=float, default=1.0)
    pl.set_defaults(func=cmd_place)

    e = sub.add_parser("eval", help="plausibility + diversity over placements")
    e.add_argument("--placements", required=True)
    e.add_argument("--sdf", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--k", type=int, default=20)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    sv = sub.add_parser("serve", help="HTTP/WebSocket service for the viewer")
    sv.add_argument("--port", type=int, default=8080)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--data", required=True)
    sv.add_argument("--viewer", default=None, help="static viewer directory to serve at /")
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _setup_threads(args.threads)
    _log_config(args)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
