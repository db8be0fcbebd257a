"""Physical plausibility and diversity metrics over sets of placed bodies.

Non-collision is the fraction of body vertices with positive SDF values;
contact is 1 when at least one vertex has a non-positive value. Diversity
clusters placement parameter vectors with k-means (k-means++ seeding, best
of 50 restarts) and reports the entropy of the cluster histogram in nats
plus the mean sample-to-center distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as hsrng
from .sdf import SdfGrid


class MetricsError(ValueError):
    pass


@dataclass
class PlausibilityReport:
    non_collision: np.ndarray  # (N,) per body, in [0, 1]
    contact: np.ndarray  # (N,) per body, {0, 1}

    @property
    def non_collision_mean(self) -> float:
        return float(self.non_collision.mean())

    @property
    def contact_mean(self) -> float:
        return float(self.contact.mean())


@dataclass
class DiversityReport:
    k: int
    entropy: float  # nats
    cluster_size: float  # mean distance of samples to their center
    histogram: np.ndarray  # (k,) assignment counts


def non_collision(vertices: np.ndarray, grid: SdfGrid) -> float:
    """Fraction of vertices with strictly positive signed distance."""
    d = grid.sample(np.asarray(vertices, dtype=np.float64))
    return float((d > 0).sum() / len(d))


def contact_score(vertices: np.ndarray, grid: SdfGrid) -> int:
    """1 when any vertex has a non-positive signed distance."""
    d = grid.sample(np.asarray(vertices, dtype=np.float64))
    return int(d.min() <= 0.0)


def plausibility(bodies: list[np.ndarray], grid: SdfGrid) -> PlausibilityReport:
    nc = np.array([non_collision(v, grid) for v in bodies])
    cs = np.array([contact_score(v, grid) for v in bodies], dtype=np.int64)
    return PlausibilityReport(non_collision=nc, contact=cs)


def _kmeans_once(x: np.ndarray, k: int, g: np.random.Generator, iters: int = 100):
    n = len(x)
    # k-means++ seeding
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(g.integers(n))]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = x[int(g.integers(n))]
            break
        probs = d2 / total
        centers[j] = x[int(g.choice(n, p=probs))]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        dist = ((x[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new_assign = dist.argmin(axis=1)
        if np.array_equal(new_assign, assign) and _ > 0:
            break
        assign = new_assign
        for j in range(k):
            m = assign == j
            if m.any():
                centers[j] = x[m].mean(axis=0)
    dist = ((x[:, None, :] - centers[None]) ** 2).sum(axis=2)
    assign = dist.argmin(axis=1)
    inertia = float(dist[np.arange(n), assign].sum())
    return centers, assign, inertia


def diversity(samples: np.ndarray, k: int = 20, seed: int = 0,
              restarts: int = 50) -> DiversityReport:
    """K-means diversity of placement parameter vectors.

    Entropy is over the cluster-assignment histogram, in nats; cluster_size
    is the mean Euclidean distance from each sample to its cluster center.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise MetricsError("samples must be a 2D array (n_samples, n_params)")
    if len(x) < k:
        raise MetricsError(f"need at least k={k} samples, got {len(x)}")
    g = hsrng.generator(seed, "kmeans")
    best = None
    for _ in range(restarts):
        centers, assign, inertia = _kmeans_once(x, k, g)
        if best is None or inertia < best[2]:
            best = (centers, assign, inertia)
    centers, assign, _ = best
    hist = np.bincount(assign, minlength=k)
    p = hist[hist > 0] / hist.sum()
    entropy = float(-(p * np.log(p)).sum())
    cluster_size = float(np.linalg.norm(x - centers[assign], axis=1).mean())
    return DiversityReport(k=k, entropy=entropy, cluster_size=cluster_size, histogram=hist)
