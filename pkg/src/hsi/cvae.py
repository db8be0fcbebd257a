"""Conditional VAE over body feature maps.

The encoder sees, per feature-resolution vertex, the concatenation of the
vertex position and its contact/semantic features; three spiral-convolution
blocks with 4x pooling feed a fully connected layer and two heads for the
latent mean and log-variance. The decoder attaches the latent vector to the
per-vertex coordinates and applies spiral convolutions at feature
resolution, emitting a contact probability (sigmoid) and a semantic
distribution (softmax) per vertex.

Total loss: alpha * KL + lambda_c * sum BCE(contact) + lambda_s * sum
CCE(semantics), summed over vertices and averaged over the batch.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from . import rng as hsrng
from .geometry import BodyMesh, TriMesh
from .interaction import FeatureMap, InteractionDataset, canonicalize
from .meshnet import MeshHierarchy, SpiralIndex

_MAGIC = b"HSCK1\n"
_VERSION = 1


class CvaeError(ValueError):
    pass


class TrainDiverged(RuntimeError):
    def __init__(self, step: int, last_losses: list[float]):
        super().__init__(f"non-finite loss at step {step}; last finite losses {last_losses}")
        self.step = step
        self.last_losses = last_losses


@dataclass
class ModelConfig:
    latent_dim: int = 256
    conv_width: int = 64
    fc_width: int = 512
    spiral_length: int = 9
    alpha: float = 0.1
    lambda_c: float = 1.0
    lambda_s: float = 1.0
    n_classes: int = 8  # scene classes, void excluded
    lr: float = 1e-3
    batch_size: int = 64

    @property
    def n_features(self) -> int:
        """Contact channel + void + scene classes."""
        return 1 + self.n_classes + 1

    def validate(self):
        if min(self.latent_dim, self.conv_width, self.fc_width, self.spiral_length) < 1:
            raise CvaeError("all widths must be positive")
        if self.alpha < 0:
            raise CvaeError("alpha must be >= 0")


@dataclass
class NetSupport:
    """Spiral tables and pooling matrices the network convolves through.

    Index 0 is feature resolution; pools[k] maps conv level k to k+1.
    """

    spirals: list[np.ndarray]  # 3 tables: (V_k, l) int32
    pools: list[sp.csr_matrix]  # 3 matrices: (V_{k+1}, V_k)
    scatters: list[sp.csr_matrix] = field(default=None)

    def __post_init__(self):
        if self.scatters is None:
            self.scatters = [
                ad.gather_scatter_matrix(s.ravel(), s.shape[0]) for s in self.spirals
            ]

    @property
    def feature_resolution(self) -> int:
        return int(self.spirals[0].shape[0])

    @property
    def coarsest(self) -> int:
        return int(self.pools[-1].shape[0])

    @classmethod
    def from_hierarchy(cls, hierarchy: MeshHierarchy, spirals: dict[int, SpiralIndex],
                       feature_level: int = 1) -> "NetSupport":
        levels = [feature_level, feature_level + 1, feature_level + 2]
        return cls(
            spirals=[np.asarray(spirals[k].indices, dtype=np.int32) for k in levels],
            pools=[hierarchy.down_maps[k] for k in levels],
        )


def xavier(g: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return g.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class FeatureNet:
    """Parameter store + tape-graph builders for the cVAE."""

    def __init__(self, config: ModelConfig, support: NetSupport, seed: int = 0,
                 dtype=np.float32):
        config.validate()
        self.config = config
        self.support = support
        self.dtype = dtype
        g = hsrng.generator(seed, "init")
        w, l, z = config.conv_width, config.spiral_length, config.latent_dim
        nf = config.n_features
        if any(s.shape[1] != l for s in support.spirals):
            raise CvaeError("spiral tables do not match the configured spiral length")
        in_ch = 3 + nf
        p: dict[str, np.ndarray] = {}
        p["enc.conv0.w"] = xavier(g, l * in_ch, w, dtype)
        p["enc.conv0.b"] = np.zeros(w, dtype)
        p["enc.conv1.w"] = xavier(g, l * w, w, dtype)
        p["enc.conv1.b"] = np.zeros(w, dtype)
        p["enc.conv2.w"] = xavier(g, l * w, w, dtype)
        p["enc.conv2.b"] = np.zeros(w, dtype)
        p["enc.fc.w"] = xavier(g, support.coarsest * w, config.fc_width, dtype)
        p["enc.fc.b"] = np.zeros(config.fc_width, dtype)
        p["enc.mu.w"] = xavier(g, config.fc_width, z, dtype)
        p["enc.mu.b"] = np.zeros(z, dtype)
        p["enc.logvar.w"] = xavier(g, config.fc_width, z, dtype)
        p["enc.logvar.b"] = np.zeros(z, dtype)
        # the latent is constant across vertices, so its share of the first
        # decoder convolution factors out of the spiral gather
        p["dec.conv0.pos.w"] = xavier(g, l * 3, w, dtype)
        p["dec.conv0.z.w"] = xavier(g, l * z, w, dtype)
        p["dec.conv0.b"] = np.zeros(w, dtype)
        for k in (1, 2, 3):
            p[f"dec.conv{k}.w"] = xavier(g, l * w, w, dtype)
            p[f"dec.conv{k}.b"] = np.zeros(w, dtype)
        p["dec.out.w"] = xavier(g, l * w, nf, dtype)
        p["dec.out.b"] = np.zeros(nf, dtype)
        self.params = p
        self._cast_support()

    def _cast_support(self):
        # keep sparse matrices in the working dtype or they upcast the graph
        self._pools = [m.astype(self.dtype) for m in self.support.pools]
        self._scatters = [m.astype(self.dtype) for m in self.support.scatters]

    def astype(self, dtype) -> "FeatureNet":
        self.dtype = dtype
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        self._cast_support()
        return self

    # -- graph builders ----------------------------------------------------

    def _leaves(self, tape: ad.Tape) -> dict[str, ad.Val]:
        return {k: tape.leaf(v) for k, v in self.params.items()}

    def _conv(self, x: ad.Val, level: int, w: ad.Val, b: ad.Val) -> ad.Val:
        s = self.support
        table = s.spirals[level]
        v, l = table.shape
        g = ad.gather(x, table.ravel(), self._scatters[level])
        g = ad.reshape(g, g.shape[:-2] + (v, l * x.shape[-1]))
        return ad.linear(g, w, b)

    def encode_graph(self, tape: ad.Tape, leaves, x: ad.Val) -> tuple[ad.Val, ad.Val]:
        """x: (B, V, 3 + n_features) at feature resolution."""
        h = x
        for k in range(3):
            h = ad.relu(self._conv(h, k, leaves[f"enc.conv{k}.w"], leaves[f"enc.conv{k}.b"]))
            h = ad.spmm(self._pools[k], h)
        h = ad.reshape(h, h.shape[:-2] + (h.shape[-2] * h.shape[-1],))
        h = ad.relu(ad.linear(h, leaves["enc.fc.w"], leaves["enc.fc.b"]))
        mu = ad.linear(h, leaves["enc.mu.w"], leaves["enc.mu.b"])
        logvar = ad.linear(h, leaves["enc.logvar.w"], leaves["enc.logvar.b"])
        return mu, logvar

    def decode_graph(self, tape: ad.Tape, leaves, z: ad.Val, verts: ad.Val) -> tuple[ad.Val, ad.Val]:
        """z: (B, latent), verts: (B, V, 3) -> contact (B, V), semantics (B, V, C+1)."""
        l = self.config.spiral_length
        pos = self._conv(verts, 0, leaves["dec.conv0.pos.w"], None)
        zpart = ad.linear(ad.tile_last(z, l), leaves["dec.conv0.z.w"], leaves["dec.conv0.b"])
        h = ad.relu(ad.add_rowvec(pos, zpart))
        for k in (1, 2, 3):
            h = ad.relu(self._conv(h, 0, leaves[f"dec.conv{k}.w"], leaves[f"dec.conv{k}.b"]))
        out = self._conv(h, 0, leaves["dec.out.w"], leaves["dec.out.b"])
        contact = ad.sigmoid(ad.reshape(ad.slice_last(out, 0, 1), out.shape[:-1]))
        sem = ad.softmax(ad.slice_last(out, 1, self.config.n_features))
        return contact, sem

    # -- numpy-level forward passes -----------------------------------------

    def encode(self, fmap_contact: np.ndarray, fmap_sem: np.ndarray,
               verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = self._pack_input(fmap_contact, fmap_sem, verts)
        tape = ad.Tape()
        leaves = self._leaves(tape)
        mu, logvar = self.encode_graph(tape, leaves, tape.leaf(x))
        return mu.data, logvar.data

    def decode(self, z: np.ndarray, verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        squeeze = z.ndim == 1
        z2 = np.atleast_2d(np.asarray(z, dtype=self.dtype))
        v = np.asarray(verts, dtype=self.dtype)
        if v.ndim == 2:
            v = np.broadcast_to(v, (z2.shape[0],) + v.shape)
        tape = ad.Tape()
        leaves = self._leaves(tape)
        c, s = self.decode_graph(tape, leaves, tape.leaf(z2), tape.leaf(v))
        if squeeze:
            return c.data[0], s.data[0]
        return c.data, s.data

    def _pack_input(self, contact: np.ndarray, sem: np.ndarray, verts: np.ndarray) -> np.ndarray:
        contact = np.asarray(contact, dtype=self.dtype)
        sem = np.asarray(sem, dtype=self.dtype)
        verts = np.asarray(verts, dtype=self.dtype)
        if verts.shape[-2] != self.support.feature_resolution:
            raise CvaeError(
                f"expected {self.support.feature_resolution} feature vertices, got {verts.shape[-2]}"
            )
        return np.concatenate([verts, contact[..., None], sem], axis=-1)


# ---------------------------------------------------------------------------
# loss


def loss(f: FeatureMap, f_hat: FeatureMap, mu: np.ndarray, logvar: np.ndarray,
         config: ModelConfig) -> tuple[float, float, float]:
    """(total, kl, rec) for one frame, per the training objective."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    kl = float(0.5 * (mu ** 2 + np.exp(logvar) - 1.0 - logvar).sum())
    p = np.clip(np.asarray(f_hat.contact, dtype=np.float64), ad.CLAMP, 1 - ad.CLAMP)
    t = np.asarray(f.contact, dtype=np.float64)
    bce = float(-(t * np.log(p) + (1 - t) * np.log1p(-p)).sum())
    q = np.clip(np.asarray(f_hat.semantics, dtype=np.float64), ad.CLAMP, 1 - ad.CLAMP)
    ts = np.asarray(f.semantics, dtype=np.float64)
    cce = float(-(ts * np.log(q)).sum())
    rec = config.lambda_c * bce + config.lambda_s * cce
    return config.alpha * kl + rec, kl, rec


# ---------------------------------------------------------------------------
# checkpoint


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    hierarchy: MeshHierarchy
    spirals: dict[int, SpiralIndex]
    class_names: list[str]
    topology: str
    metadata: dict

    def net(self, dtype=np.float32) -> FeatureNet:
        support = NetSupport.from_hierarchy(self.hierarchy, self.spirals)
        n = FeatureNet(self.config, support, seed=0, dtype=dtype)
        n.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return n

    @property
    def feature_resolution(self) -> int:
        return self.hierarchy.levels[1].n_vertices

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        arrays: dict[str, np.ndarray] = {}
        for k, v in self.params.items():
            arrays[f"param.{k}"] = v
        h = self.hierarchy
        for k, level in enumerate(h.levels):
            arrays[f"hier.level{k}.verts"] = level.vertices
            arrays[f"hier.level{k}.faces"] = level.faces
        for k in range(len(h.down_maps)):
            for tag, mat in (("down", h.down_maps[k]), ("up", h.up_maps[k])):
                m = mat.tocsr()
                arrays[f"hier.{tag}{k}.data"] = m.data
                arrays[f"hier.{tag}{k}.indices"] = m.indices.astype(np.int64)
                arrays[f"hier.{tag}{k}.indptr"] = m.indptr.astype(np.int64)
            arrays[f"hier.keep{k}"] = h.keep_indices[k].astype(np.int64)
        for lvl, s in self.spirals.items():
            arrays[f"spiral.{lvl}"] = s.indices
        for k, v in self.metadata.items():
            if isinstance(v, np.ndarray):
                arrays[f"meta.{k}"] = v

        index = []
        offset = 0
        blobs = []
        for name in sorted(arrays):
            a = np.ascontiguousarray(arrays[name])
            if a.dtype.byteorder == ">":
                a = a.astype(a.dtype.newbyteorder("<"))
            blob = a.tobytes()
            index.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                          "offset": offset, "nbytes": len(blob)})
            blobs.append(blob)
            offset += len(blob)
        header = {
            "version": _VERSION,
            "config": asdict(self.config),
            "class_names": self.class_names,
            "topology": self.topology,
            "metadata": {k: v for k, v in self.metadata.items() if not isinstance(v, np.ndarray)},
            "n_levels": len(h.levels),
            "n_maps": len(h.down_maps),
            "map_shapes": [[list(m.shape) for m in (h.down_maps[k], h.up_maps[k])]
                           for k in range(len(h.down_maps))],
            "spiral_levels": sorted(self.spirals),
            "arrays": index,
        }
        hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", len(hdr)))
            fh.write(hdr)
            for b in blobs:
                fh.write(b)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise CvaeError(f"{path}: bad checkpoint magic")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            if header["version"] != _VERSION:
                raise CvaeError(f"{path}: unsupported checkpoint version")
            raw = fh.read()
        arrays = {}
        for ent in header["arrays"]:
            a = np.frombuffer(raw, dtype=np.dtype(ent["dtype"]),
                              count=int(np.prod(ent["shape"])) if ent["shape"] else 1,
                              offset=ent["offset"]).reshape(ent["shape"])
            arrays[ent["name"]] = a.copy()
        params = {k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")}
        levels = [TriMesh(arrays[f"hier.level{k}.verts"], arrays[f"hier.level{k}.faces"])
                  for k in range(header["n_levels"])]
        downs, ups, keeps = [], [], []
        for k in range(header["n_maps"]):
            dshape, ushape = header["map_shapes"][k]
            downs.append(sp.csr_matrix(
                (arrays[f"hier.down{k}.data"], arrays[f"hier.down{k}.indices"],
                 arrays[f"hier.down{k}.indptr"]), shape=tuple(dshape)))
            ups.append(sp.csr_matrix(
                (arrays[f"hier.up{k}.data"], arrays[f"hier.up{k}.indices"],
                 arrays[f"hier.up{k}.indptr"]), shape=tuple(ushape)))
            keeps.append(arrays[f"hier.keep{k}"])
        hierarchy = MeshHierarchy(levels=levels, down_maps=downs, up_maps=ups, keep_indices=keeps)
        spirals = {lvl: SpiralIndex(arrays[f"spiral.{lvl}"], arrays[f"spiral.{lvl}"].shape[1])
                   for lvl in header["spiral_levels"]}
        metadata = dict(header["metadata"])
        for k, v in arrays.items():
            if k.startswith("meta."):
                metadata[k[len("meta."):]] = v
        return cls(config=ModelConfig(**header["config"]), params=params, hierarchy=hierarchy,
                   spirals=spirals, class_names=list(header["class_names"]),
                   topology=header["topology"], metadata=metadata)


# ---------------------------------------------------------------------------
# training


def _dataset_arrays(dataset: InteractionDataset, dtype):
    verts = np.stack([v for v, _ in dataset.frames]).astype(dtype)
    contact = np.stack([f.contact for _, f in dataset.frames]).astype(dtype)
    sem = np.stack([f.semantics for _, f in dataset.frames]).astype(dtype)
    return verts, contact, sem


def contact_accuracy(net: FeatureNet, verts: np.ndarray, contact: np.ndarray,
                     sem: np.ndarray, batch: int = 64) -> float:
    """Reconstruction accuracy of hard contact labels through the latent mean."""
    hits = 0
    total = 0
    for s in range(0, len(verts), batch):
        v = verts[s: s + batch]
        c = contact[s: s + batch]
        x = net._pack_input(c, sem[s: s + batch], v)
        tape = ad.Tape()
        leaves = net._leaves(tape)
        mu, _ = net.encode_graph(tape, leaves, tape.leaf(x))
        p, _ = net.decode_graph(tape, leaves, mu, tape.leaf(v))
        hits += int(((p.data > 0.5) == (c > 0.5)).sum())
        total += c.size
        tape.release()
    return hits / max(total, 1)


def train(dataset: InteractionDataset, config: ModelConfig, seed: int, epochs: int,
          support: NetSupport | None = None,
          hierarchy: MeshHierarchy | None = None,
          spirals: dict[int, SpiralIndex] | None = None,
          max_steps: int | None = None,
          stop_contact_accuracy: float | None = None,
          eval_every: int = 50,
          log_fn=None) -> Checkpoint:
    """Train on an interaction dataset; deterministic given the seed.

    The mesh hierarchy/spirals default to the dataset's body topology. A
    checkpoint is returned even for epochs=0 (parameters at initialization).
    """
    if len(dataset) == 0:
        raise CvaeError("dataset is empty")
    if hierarchy is None or spirals is None:
        from .synthgen import get_topology

        topo = get_topology(dataset.topology, spiral_length=config.spiral_length)
        hierarchy, spirals = topo.hierarchy, topo.spirals
    if support is None:
        support = NetSupport.from_hierarchy(hierarchy, spirals)
    if support.feature_resolution != dataset.resolution:
        raise CvaeError(
            f"dataset resolution {dataset.resolution} does not match hierarchy "
            f"feature resolution {support.feature_resolution}"
        )
    if len(dataset.class_names) != config.n_classes:
        raise CvaeError("config.n_classes does not match the dataset class list")

    net = FeatureNet(config, support, seed=seed, dtype=np.float32)
    verts, contact, sem = _dataset_arrays(dataset, np.float32)
    n = len(dataset)
    # deterministic 10% validation split by hash of the frame index
    import zlib

    val_mask = np.array([zlib.crc32(str(i).encode()) % 10 == 0 for i in range(n)])
    if val_mask.all():
        val_mask[:] = False
    train_idx = np.nonzero(~val_mask)[0]
    val_idx = np.nonzero(val_mask)[0]

    state = ad.AdamState(lr=config.lr)
    shuffle = hsrng.generator(seed, "shuffle")
    noise_rng = hsrng.generator(seed, "noise")
    curve = []
    last_finite: list[float] = []
    step = 0
    stop = False
    batch = max(1, min(config.batch_size, len(train_idx)))
    for _epoch in range(epochs):
        order = train_idx[shuffle.permutation(len(train_idx))]
        for s in range(0, len(order), batch):
            idx = order[s: s + batch]
            b = len(idx)
            x = net._pack_input(contact[idx], sem[idx], verts[idx])
            tape = ad.Tape()
            leaves = net._leaves(tape)
            mu, logvar = net.encode_graph(tape, leaves, tape.leaf(x))
            noise = noise_rng.standard_normal((b, config.latent_dim)).astype(np.float32)
            z = ad.reparameterize(mu, logvar, noise)
            p, q = net.decode_graph(tape, leaves, z, tape.leaf(verts[idx]))
            kl_t = ad.vsum(ad.kl_normal(mu, logvar))
            bce_t = ad.vsum(ad.bce(p, contact[idx]))
            cce_t = ad.vsum(ad.cce(q, sem[idx]))
            total = ad.add(
                ad.mul(kl_t, config.alpha / b),
                ad.add(ad.mul(bce_t, config.lambda_c / b), ad.mul(cce_t, config.lambda_s / b)),
            )
            tv = float(total.data)
            kl_v = float(kl_t.data) / b
            rec_v = (float(bce_t.data) * config.lambda_c
                     + float(cce_t.data) * config.lambda_s) / b
            if not np.isfinite(tv):
                raise TrainDiverged(step, last_finite[-5:])
            grads = tape.backward(total)
            gdict = {k: grads[v.idx] for k, v in leaves.items()}
            tape.release()
            net.params = ad.adam_step(state, net.params, gdict)
            curve.append((tv, kl_v, rec_v))
            last_finite.append(tv)
            step += 1
            if stop_contact_accuracy is not None and step % eval_every == 0:
                acc = contact_accuracy(net, verts[train_idx], contact[train_idx], sem[train_idx])
                if log_fn:
                    log_fn(f"step {step}: loss {tv:.3f} contact acc {acc:.4f}")
                if acc >= stop_contact_accuracy:
                    stop = True
                    break
            elif log_fn and step % eval_every == 0:
                log_fn(f"step {step}: loss {tv:.3f}")
            if max_steps is not None and step >= max_steps:
                stop = True
                break
        if stop:
            break

    val_loss = float("nan")
    if len(val_idx):
        vl = 0.0
        for i in val_idx:
            x = net._pack_input(contact[i: i + 1], sem[i: i + 1], verts[i: i + 1])
            tape = ad.Tape()
            leaves = net._leaves(tape)
            mu, logvar = net.encode_graph(tape, leaves, tape.leaf(x))
            p, q = net.decode_graph(tape, leaves, mu, tape.leaf(verts[i: i + 1]))
            fm = dataset.frames[i][1]
            t, _, _ = loss(fm, FeatureMap(p.data[0], q.data[0]), mu.data[0], logvar.data[0], config)
            vl += t
        val_loss = vl / len(val_idx)

    meta = {
        "seed": int(seed),
        "epochs": int(epochs),
        "steps": int(step),
        "val_frames": int(len(val_idx)),
        "val_loss": val_loss,
        "loss_curve": np.asarray(curve, dtype=np.float32).reshape(-1, 3),
    }
    return Checkpoint(config=config, params=dict(net.params), hierarchy=hierarchy,
                      spirals=spirals, class_names=list(dataset.class_names),
                      topology=dataset.topology, metadata=meta)


# ---------------------------------------------------------------------------
# public encode/decode/sample on checkpoints


def encode(ckpt: Checkpoint, fmap: FeatureMap, verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    net = ckpt.net()
    mu, logvar = net.encode(fmap.contact[None], fmap.semantics[None], verts[None])
    return mu[0], logvar[0]


def decode(ckpt: Checkpoint, z: np.ndarray, verts: np.ndarray) -> FeatureMap:
    net = ckpt.net()
    c, s = net.decode(z, verts)
    return FeatureMap(c, s)


def conditioning_vertices(ckpt: Checkpoint, body: BodyMesh) -> np.ndarray:
    """Canonicalize the body and restrict it to feature resolution."""
    if body.mesh.n_vertices != ckpt.hierarchy.levels[0].n_vertices:
        raise CvaeError(
            f"body has {body.mesh.n_vertices} vertices; checkpoint topology "
            f"{ckpt.topology!r} expects {ckpt.hierarchy.levels[0].n_vertices}"
        )
    canon = canonicalize(body)
    return ckpt.hierarchy.down_maps[0] @ canon.posed_vertices()


def sample(ckpt: Checkpoint, body: BodyMesh, n: int, seed: int,
           mode: bool = False) -> list[FeatureMap]:
    """Draw n feature maps conditioned on the (canonicalized) body.

    `mode=True` forces z = 0 (the conditional mode) instead of Gaussian
    samples.
    """
    if n == 0:
        return []
    net = ckpt.net()
    verts = conditioning_vertices(ckpt, body).astype(np.float32)
    if mode:
        z = np.zeros((n, ckpt.config.latent_dim), dtype=np.float32)
    else:
        g = hsrng.generator(seed, "sample-z")
        z = g.standard_normal((n, ckpt.config.latent_dim)).astype(np.float32)
    c, s = net.decode(z, verts)
    return [FeatureMap(c[i], s[i]) for i in range(n)]
