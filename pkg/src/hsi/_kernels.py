"""Numba kernels for triangle proximity queries and voxel sign estimation.

Everything here is scalar/loop code jitted with numba; the public mesh API
lives in :mod:`hsi.geometry` and :mod:`hsi.sdf`. Kernels are cached to disk
so repeated CLI invocations do not pay the compile cost again.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Traversal stack depth; enough for > 2^60 triangles with binary splits.
_STACK = 64


@njit(cache=True)
def closest_point_tri(ax, ay, az, bx, by, bz, cx, cy, cz, qx, qy, qz):
    """Closest point on triangle abc to query q.

    Region-based method from Ericson, Real-Time Collision Detection.
    Returns (squared distance, px, py, pz).
    """
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = qx - ax, qy - ay, qz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        dx, dy, dz = qx - ax, qy - ay, qz - az
        return dx * dx + dy * dy + dz * dz, ax, ay, az

    bpx, bpy, bpz = qx - bx, qy - by, qz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        dx, dy, dz = qx - bx, qy - by, qz - bz
        return dx * dx + dy * dy + dz * dz, bx, by, bz

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        px, py, pz = ax + v * abx, ay + v * aby, az + v * abz
        dx, dy, dz = qx - px, qy - py, qz - pz
        return dx * dx + dy * dy + dz * dz, px, py, pz

    cpx, cpy, cpz = qx - cx, qy - cy, qz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        dx, dy, dz = qx - cx, qy - cy, qz - cz
        return dx * dx + dy * dy + dz * dz, cx, cy, cz

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        px, py, pz = ax + w * acx, ay + w * acy, az + w * acz
        dx, dy, dz = qx - px, qy - py, qz - pz
        return dx * dx + dy * dy + dz * dz, px, py, pz

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        px, py, pz = bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
        dx, dy, dz = qx - px, qy - py, qz - pz
        return dx * dx + dy * dy + dz * dz, px, py, pz

    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    px = ax + abx * v + acx * w
    py = ay + aby * v + acy * w
    pz = az + abz * v + acz * w
    dx, dy, dz = qx - px, qy - py, qz - pz
    return dx * dx + dy * dy + dz * dz, px, py, pz


@njit(cache=True)
def brute_closest(tris, qx, qy, qz):
    """Exhaustive closest point over all triangles; ties go to the lowest face."""
    best_d2 = np.inf
    best_f = -1
    best_x = 0.0
    best_y = 0.0
    best_z = 0.0
    for f in range(tris.shape[0]):
        d2, px, py, pz = closest_point_tri(
            tris[f, 0, 0], tris[f, 0, 1], tris[f, 0, 2],
            tris[f, 1, 0], tris[f, 1, 1], tris[f, 1, 2],
            tris[f, 2, 0], tris[f, 2, 1], tris[f, 2, 2],
            qx, qy, qz,
        )
        if d2 < best_d2:
            best_d2 = d2
            best_f = f
            best_x, best_y, best_z = px, py, pz
    return best_d2, best_f, best_x, best_y, best_z


@njit(cache=True, inline="always")
def _box_d2(bmin, bmax, node, qx, qy, qz):
    d2 = 0.0
    v = bmin[node, 0] - qx
    if v > 0.0:
        d2 += v * v
    v = qx - bmax[node, 0]
    if v > 0.0:
        d2 += v * v
    v = bmin[node, 1] - qy
    if v > 0.0:
        d2 += v * v
    v = qy - bmax[node, 1]
    if v > 0.0:
        d2 += v * v
    v = bmin[node, 2] - qz
    if v > 0.0:
        d2 += v * v
    v = qz - bmax[node, 2]
    if v > 0.0:
        d2 += v * v
    return d2


@njit(cache=True)
def bvh_closest(bmin, bmax, left, right, start, count, order, tris, qx, qy, qz):
    """Closest point via BVH traversal.

    Matches :func:`brute_closest` exactly: candidate triangles are compared
    with strict <, node boxes at distance equal to the current best are still
    visited, and exact float ties between faces resolve to the lowest index.
    """
    best_d2 = np.inf
    best_f = -1
    best_x = 0.0
    best_y = 0.0
    best_z = 0.0
    stack = np.empty(_STACK, dtype=np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if _box_d2(bmin, bmax, node, qx, qy, qz) > best_d2:
            continue
        l = left[node]
        if l < 0:
            s = start[node]
            for i in range(s, s + count[node]):
                f = order[i]
                d2, px, py, pz = closest_point_tri(
                    tris[f, 0, 0], tris[f, 0, 1], tris[f, 0, 2],
                    tris[f, 1, 0], tris[f, 1, 1], tris[f, 1, 2],
                    tris[f, 2, 0], tris[f, 2, 1], tris[f, 2, 2],
                    qx, qy, qz,
                )
                if d2 < best_d2 or (d2 == best_d2 and f < best_f):
                    best_d2 = d2
                    best_f = f
                    best_x, best_y, best_z = px, py, pz
        else:
            r = right[node]
            dl = _box_d2(bmin, bmax, l, qx, qy, qz)
            dr = _box_d2(bmin, bmax, r, qx, qy, qz)
            if dl <= dr:
                if dr <= best_d2:
                    stack[top] = r
                    top += 1
                if dl <= best_d2:
                    stack[top] = l
                    top += 1
            else:
                if dl <= best_d2:
                    stack[top] = l
                    top += 1
                if dr <= best_d2:
                    stack[top] = r
                    top += 1
    return best_d2, best_f, best_x, best_y, best_z


@njit(cache=True)
def bvh_closest_many(bmin, bmax, left, right, start, count, order, tris, queries,
                     out_d, out_f, out_p):
    for i in range(queries.shape[0]):
        d2, f, px, py, pz = bvh_closest(
            bmin, bmax, left, right, start, count, order, tris,
            queries[i, 0], queries[i, 1], queries[i, 2],
        )
        out_d[i] = np.sqrt(d2)
        out_f[i] = f
        out_p[i, 0] = px
        out_p[i, 1] = py
        out_p[i, 2] = pz


@njit(cache=True)
def column_parity(tris, xs, ys, zs, out):
    """Inside/outside parity by ray casting along the last axis.

    For every column (xs[i], ys[j]) a ray is cast along +axis2 against all
    triangles; out[i, j, k] is 1 where the crossing count below zs[k] is odd.
    Triangles parallel to the ray are skipped (the other two axes and the
    pseudo-normal fallback cover them). Callers jitter xs/ys off the grid
    lattice so edge-exact hits are measure-zero.
    """
    nx = xs.shape[0]
    ny = ys.shape[0]
    nz = zs.shape[0]
    nt = tris.shape[0]
    hits = np.empty(nt, dtype=np.float64)
    for i in range(nx):
        x = xs[i]
        for j in range(ny):
            y = ys[j]
            nh = 0
            for f in range(nt):
                ax, ay, az = tris[f, 0, 0], tris[f, 0, 1], tris[f, 0, 2]
                bx, by, bz = tris[f, 1, 0], tris[f, 1, 1], tris[f, 1, 2]
                cx, cy, cz = tris[f, 2, 0], tris[f, 2, 1], tris[f, 2, 2]
                # 2D edge functions in the projection plane.
                w0 = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
                w1 = (cx - bx) * (y - by) - (cy - by) * (x - bx)
                w2 = (ax - cx) * (y - cy) - (ay - cy) * (x - cx)
                if (w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0) or (
                    w0 <= 0.0 and w1 <= 0.0 and w2 <= 0.0
                ):
                    area = w0 + w1 + w2
                    if area != 0.0:
                        # Barycentric interpolation of the hit height.
                        z = (w1 * az + w2 * bz + w0 * cz) / area
                        hits[nh] = z
                        nh += 1
            if nh == 0:
                for k in range(nz):
                    out[i, j, k] = 0
                continue
            sub = np.sort(hits[:nh])
            for k in range(nz):
                z = zs[k]
                lo = 0
                hi = nh
                while lo < hi:
                    mid = (lo + hi) // 2
                    if sub[mid] < z:
                        lo = mid + 1
                    else:
                        hi = mid
                out[i, j, k] = lo & 1
