"""Random sequential adsorption and spatial birth-growth acceptance."""
from __future__ import annotations

import heapq
import math

import numpy as np

from ..geometry import PointCloud, distance
from .graphs import kdtree

__all__ = ["rsa_accept", "birth_growth_accept", "neighbor_lists"]


def neighbor_lists(cloud: PointCloud, reach: float, strict: bool = True):
    """CSR adjacency of pairs closer than ``reach`` (``<`` if strict, else ``<=``).

    Returns ``(indptr, indices, dists)``.
    """
    n = cloud.n
    if n == 0 or reach <= 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
    tree = kdtree(cloud.window, cloud.points)
    pairs = tree.query_pairs(reach, output_type="ndarray")
    if pairs.size:
        dd = np.atleast_1d(distance(cloud.window, cloud.points[pairs[:, 0]], cloud.points[pairs[:, 1]]))
        keep = dd < reach if strict else dd <= reach
        pairs, dd = pairs[keep], dd[keep]
    else:
        dd = np.zeros(0)
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    dd = np.concatenate([dd, dd])
    order = np.lexsort((dst, src))
    src, dst, dd = src[order], dst[order], dd[order]
    indptr = np.searchsorted(src, np.arange(n + 1))
    return indptr, dst.astype(np.int64), dd


def _time_order(cloud: PointCloud) -> np.ndarray:
    if cloud.times is None:
        raise ValueError("missing time marks")
    t = cloud.times
    order = np.argsort(t, kind="stable")
    if np.any(np.diff(t[order]) == 0):
        raise ValueError("time marks must be distinct")
    return order


def rsa_accept(cloud: PointCloud, r: float) -> np.ndarray:
    """Acceptance indicators of random sequential adsorption.

    Points are visited in increasing time-mark order; a ball of radius ``r``
    is accepted iff it overlaps no previously accepted ball, where overlap
    means centre distance ``< 2r``.
    """
    if not r > 0:
        raise ValueError("ball radius must be > 0")
    order = _time_order(cloud)
    indptr, indices, _ = neighbor_lists(cloud, 2.0 * r, strict=True)
    accepted = np.zeros(cloud.n, dtype=bool)
    for i in order.tolist():
        nb = indices[indptr[i] : indptr[i + 1]]
        if nb.size == 0 or not accepted[nb].any():
            accepted[i] = True
    return accepted.astype(np.int8)


def _contact_time(t0, D, bj, rj, sj, bk, rk, sk, v):
    """First ``t >= t0`` with ``R_j(t) + R_k(t) >= D`` under linear growth until stop."""
    def total(t):
        return rj + v * (min(max(t, bj), sj) - bj) + rk + v * (min(max(t, bk), sk) - bk)

    if total(t0) >= D:
        return t0
    knots = sorted(x for x in (sj, sk) if x > t0) + [math.inf]
    lo = t0
    for hi in knots:
        rate = v * ((sj > lo) + (sk > lo))
        if rate > 0:
            t = lo + (D - total(lo)) / rate
            if t <= hi:
                return t
        lo = hi
    return math.inf


def birth_growth_accept(cloud: PointCloud, v: float, rho_max: float) -> np.ndarray:
    """Acceptance indicators of the spatial birth-growth model.

    Each particle is born at its time mark with its radius mark, grows at
    speed ``v`` and stops on touching another accepted particle or on
    reaching ``rho_max``.  A newborn particle is accepted iff its ball does
    not overlap the current ball of any accepted particle (coincident centres
    always overlap).  Contacts are resolved exactly in time order between
    births.  ``v = 0`` with constant radii reduces to :func:`rsa_accept`.
    """
    if v < 0 or not rho_max > 0:
        raise ValueError("need v >= 0 and rho_max > 0")
    if cloud.radii is None:
        raise ValueError("missing radius marks")
    order = _time_order(cloud)
    t = cloud.times
    r0 = cloud.radii
    cap = np.maximum(rho_max, r0)
    if v > 0:
        stop = t + (cap - r0) / v
    else:
        stop = t.copy()
    stop = stop.astype(float)
    reach = 2.0 * float(cap.max()) if cloud.n else 0.0
    indptr, indices, dists = neighbor_lists(cloud, reach, strict=False)

    accepted = np.zeros(cloud.n, dtype=bool)
    version = np.zeros(cloud.n, dtype=np.int64)
    heap: list = []

    def radius(j, time):
        return r0[j] + v * (min(max(time, t[j]), stop[j]) - t[j])

    def push_pairs(j, now):
        for k, D in zip(indices[indptr[j] : indptr[j + 1]].tolist(), dists[indptr[j] : indptr[j + 1]].tolist()):
            if not accepted[k] or (stop[j] <= now and stop[k] <= now):
                continue
            tc = _contact_time(max(now, t[j], t[k]), D, t[j], r0[j], stop[j], t[k], r0[k], stop[k], v)
            if math.isfinite(tc):
                heapq.heappush(heap, (tc, j, k, version[j], version[k]))

    def resolve_until(horizon):
        while heap and heap[0][0] <= horizon:
            tc, j, k, vj, vk = heapq.heappop(heap)
            if vj != version[j] or vk != version[k]:
                continue
            changed = []
            for p in (j, k):
                if stop[p] > tc:
                    stop[p] = tc
                    version[p] += 1
                    changed.append(p)
            for p in changed:
                push_pairs(p, tc)

    for i in order.tolist():
        ti = t[i]
        if v > 0:
            resolve_until(ti)
        ok = True
        for k, D in zip(indices[indptr[i] : indptr[i + 1]].tolist(), dists[indptr[i] : indptr[i + 1]].tolist()):
            if accepted[k] and (D < radius(k, ti) + r0[i] or D == 0.0):
                ok = False
                break
        if ok:
            accepted[i] = True
            if v > 0:
                push_pairs(i, ti)
    return accepted.astype(np.int8)
