"""Minimal reverse-mode automatic differentiation with an Adam optimizer.

Define-by-run: operations append to a :class:`Tape` and record a closure
that routes the upstream gradient to their inputs. The op set is exactly
what the feature-map cVAE needs: dense linear maps, index gathers, sparse
pooling matmuls, elementwise nonlinearities, reductions, the two
cross-entropies, the Gaussian KL, and reparameterized sampling.

Probabilities are clamped to [1e-7, 1 - 1e-7] before logs. Gradients are
plain numpy arrays in the dtype of the forward values; use float64 inputs
for finite-difference checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

CLAMP = 1e-7


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Val:
    """Handle to a value on a tape."""

    tape: "Tape"
    idx: int

    @property
    def data(self) -> np.ndarray:
        return self.tape._data[self.idx]

    @property
    def shape(self):
        return self.tape._data[self.idx].shape


class Tape:
    """Append-only operation record; values are only ever read by later ops."""

    def __init__(self):
        self._data: list[np.ndarray] = []
        self._ops: list[tuple[str, int, tuple[int, ...], object]] = []

    def leaf(self, arr) -> Val:
        self._data.append(np.asarray(arr))
        return Val(self, len(self._data) - 1)

    def _record(self, name: str, out: np.ndarray, ins: tuple[Val, ...], bwd) -> Val:
        self._data.append(out)
        idx = len(self._data) - 1
        self._ops.append((name, idx, tuple(v.idx for v in ins), bwd))
        return Val(self, idx)

    def release(self) -> None:
        """Drop recorded values and closures.

        Ops close over their inputs and the handles point back at the tape,
        a reference cycle the allocator only clears on full GC passes; hot
        training loops call this to free a step's activations immediately.
        """
        self._ops.clear()
        self._data.clear()

    def backward(self, loss: Val) -> list[np.ndarray | None]:
        """Gradients of a scalar loss w.r.t. every value id (None off-path)."""
        if loss.tape is not self:
            raise ValueError("loss belongs to a different tape")
        out = self._data[loss.idx]
        if out.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {out.shape}")
        grads: list[np.ndarray | None] = [None] * len(self._data)
        grads[loss.idx] = np.ones_like(out)
        for name, idx, ins, bwd in reversed(self._ops):
            g = grads[idx]
            if g is None:
                continue
            for i, gi in zip(ins, bwd(g)):
                if gi is None:
                    continue
                if grads[i] is None:
                    grads[i] = gi
                else:
                    grads[i] = grads[i] + gi
        return grads


def backward(tape: Tape, loss: Val) -> list[np.ndarray | None]:
    return tape.backward(loss)


def _same_tape(*vals: Val) -> Tape:
    t = vals[0].tape
    for v in vals[1:]:
        if v.tape is not t:
            raise ValueError("values belong to different tapes")
    return t


# ---------------------------------------------------------------------------
# forward ops


def linear(x: Val, w: Val, b: Val | None = None) -> Val:
    """y = x @ w (+ b); x: (..., K), w: (K, M), b: (M,)."""
    t = _same_tape(x, w) if b is None else _same_tape(x, w, b)
    xd, wd = x.data, w.data
    if xd.shape[-1] != wd.shape[0]:
        raise ShapeError(f"linear: x {xd.shape} incompatible with w {wd.shape}")
    x2 = xd.reshape(-1, xd.shape[-1])
    y = x2 @ wd
    if b is not None:
        y = y + b.data
    y = y.reshape(xd.shape[:-1] + (wd.shape[1],))

    def bwd(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ wd.T).reshape(xd.shape)
        gw = x2.T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return t._record("linear", y, (x, w) if b is None else (x, w, b), bwd)


def _sp_apply(m: sp.csr_matrix, a: np.ndarray) -> np.ndarray:
    """m @ a along axis -2, looping contiguous batch slices (no transposes)."""
    lead = a.shape[:-2]
    a3 = np.ascontiguousarray(a).reshape((-1,) + a.shape[-2:])
    out = np.empty((a3.shape[0], m.shape[0], a.shape[-1]),
                   dtype=np.promote_types(m.dtype, a.dtype))
    for b in range(a3.shape[0]):
        out[b] = m @ a3[b]
    return out.reshape(lead + (m.shape[0], a.shape[-1]))


def gather(x: Val, indices: np.ndarray, scatter: sp.csr_matrix | None = None) -> Val:
    """Select rows along axis -2: x (..., V, C) -> (..., L, C).

    `scatter` is an optional precomputed (V, L) one-hot CSR used to push the
    gradient back with a sparse matmul; without it a (slow) indexed add runs.
    """
    idx = np.asarray(indices).ravel()
    xd = x.data
    y = xd[..., idx, :]

    def bwd(g):
        if scatter is not None:
            return (_sp_apply(scatter, g),)
        gx = np.zeros_like(xd)
        np.add.at(np.moveaxis(gx, -2, 0), idx, np.moveaxis(g, -2, 0))
        return (gx,)

    return x.tape._record("gather", y, (x,), bwd)


def gather_scatter_matrix(indices: np.ndarray, n_vertices: int) -> sp.csr_matrix:
    """(V, L) one-hot transpose used for fast gather backward."""
    idx = np.asarray(indices).ravel()
    m = sp.csr_matrix(
        (np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(n_vertices, len(idx))
    )
    return m


def spmm(s: sp.csr_matrix, x: Val) -> Val:
    """y = S @ x along axis -2; S (R, V), x (..., V, C) -> (..., R, C)."""
    xd = x.data
    if xd.shape[-2] != s.shape[1]:
        raise ShapeError(f"spmm: S {s.shape} incompatible with x {xd.shape}")
    st = s.T.tocsr()
    y = _sp_apply(s, xd)

    def bwd(g):
        return (_sp_apply(st, g),)

    return x.tape._record("spmm", y, (x,), bwd)


def concat(vals: list[Val], axis: int = -1) -> Val:
    t = _same_tape(*vals)
    arrs = [v.data for v in vals]
    y = np.concatenate(arrs, axis=axis)
    sizes = [a.shape[axis] for a in arrs]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return t._record("concat", y, tuple(vals), bwd)


def tile_last(x: Val, reps: int) -> Val:
    """Repeat the last axis `reps` times: (..., K) -> (..., reps*K)."""
    xd = x.data
    y = np.tile(xd, (1,) * (xd.ndim - 1) + (reps,))

    def bwd(g):
        return (g.reshape(g.shape[:-1] + (reps, xd.shape[-1])).sum(axis=-2),)

    return x.tape._record("tile_last", y, (x,), bwd)


def add(a: Val, b: Val) -> Val:
    t = _same_tape(a, b)
    ad, bd = a.data, b.data
    if ad.shape != bd.shape:
        raise ShapeError(f"add: shapes differ {ad.shape} vs {bd.shape}")
    return t._record("add", ad + bd, (a, b), lambda g: (g, g))


def add_rowvec(x: Val, r: Val) -> Val:
    """x (..., V, C) + r (..., C) broadcast across the V axis."""
    t = _same_tape(x, r)
    xd, rd = x.data, r.data
    y = xd + rd[..., None, :]

    def bwd(g):
        return g, g.sum(axis=-2)

    return t._record("add_rowvec", y, (x, r), bwd)


def mul(x: Val, scalar: float) -> Val:
    s = float(scalar)
    return x.tape._record("mul", x.data * s, (x,), lambda g: (g * s,))


def reshape(x: Val, shape) -> Val:
    xd = x.data
    y = xd.reshape(shape)
    return x.tape._record("reshape", y, (x,), lambda g: (g.reshape(xd.shape),))


def slice_last(x: Val, start: int, stop: int) -> Val:
    """View of channels [start, stop) along the last axis."""
    xd = x.data
    y = np.ascontiguousarray(xd[..., start:stop])

    def bwd(g):
        gx = np.zeros_like(xd)
        gx[..., start:stop] = g
        return (gx,)

    return x.tape._record("slice_last", y, (x,), bwd)


def relu(x: Val) -> Val:
    xd = x.data
    y = np.maximum(xd, 0)
    return x.tape._record("relu", y, (x,), lambda g: (g * (xd > 0),))


def sigmoid(x: Val) -> Val:
    y = expit(x.data)
    return x.tape._record("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def softmax(x: Val) -> Val:
    xd = x.data
    e = np.exp(xd - xd.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return x.tape._record("softmax", y, (x,), bwd)


def vsum(x: Val) -> Val:
    xd = x.data
    y = np.asarray(xd.sum())
    return x.tape._record("sum", y, (x,), lambda g: (np.broadcast_to(g, xd.shape).copy(),))


def vmean(x: Val) -> Val:
    xd = x.data
    n = xd.size
    y = np.asarray(xd.mean())
    return x.tape._record("mean", y, (x,), lambda g: (np.broadcast_to(g / n, xd.shape).copy(),))


def bce(p: Val, target: np.ndarray) -> Val:
    """Elementwise binary cross-entropy -[t ln p + (1-t) ln(1-p)]."""
    t = np.asarray(target)
    pd = p.data
    if pd.shape != t.shape:
        raise ShapeError(f"bce: p {pd.shape} vs target {t.shape}")
    pc = np.clip(pd, CLAMP, 1.0 - CLAMP)
    y = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
    active = (pd > CLAMP) & (pd < 1.0 - CLAMP)

    def bwd(g):
        return (g * active * (-(t / pc) + (1.0 - t) / (1.0 - pc)),)

    return p.tape._record("bce", y, (p,), bwd)


def cce(q: Val, target_onehot: np.ndarray) -> Val:
    """Per-row categorical cross-entropy -sum_k t_k ln q_k over the last axis."""
    t = np.asarray(target_onehot)
    qd = q.data
    if qd.shape != t.shape:
        raise ShapeError(f"cce: q {qd.shape} vs target {t.shape}")
    qc = np.clip(qd, CLAMP, 1.0 - CLAMP)
    y = -(t * np.log(qc)).sum(axis=-1)
    active = (qd > CLAMP) & (qd < 1.0 - CLAMP)

    def bwd(g):
        return (g[..., None] * active * (-t / qc),)

    return q.tape._record("cce", y, (q,), bwd)


def kl_normal(mu: Val, logvar: Val) -> Val:
    """Per-dimension KL(N(mu, e^logvar) || N(0, 1)) = (mu^2 + e^lv - 1 - lv) / 2."""
    t = _same_tape(mu, logvar)
    m, lv = mu.data, logvar.data
    if m.shape != lv.shape:
        raise ShapeError(f"kl_normal: mu {m.shape} vs logvar {lv.shape}")
    ev = np.exp(lv)
    y = 0.5 * (m * m + ev - 1.0 - lv)

    def bwd(g):
        return g * m, g * 0.5 * (ev - 1.0)

    return t._record("kl_normal", y, (mu, logvar), bwd)


def reparameterize(mu: Val, logvar: Val, noise: np.ndarray) -> Val:
    """z = mu + exp(logvar / 2) * noise, with noise held constant."""
    t = _same_tape(mu, logvar)
    n = np.asarray(noise)
    m, lv = mu.data, logvar.data
    if m.shape != lv.shape or m.shape != n.shape:
        raise ShapeError("reparameterize: mu, logvar, noise must share a shape")
    std = np.exp(0.5 * lv)
    y = m + std * n

    def bwd(g):
        return g, g * 0.5 * std * n

    return t._record("reparameterize", y, (mu, logvar), bwd)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays."""
    state.step += 1
    t = state.step
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"adam: grad {g.shape} vs param {p.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        mhat = m / (1.0 - state.beta1 ** t)
        vhat = v / (1.0 - state.beta2 ** t)
        out[name] = p - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return out
