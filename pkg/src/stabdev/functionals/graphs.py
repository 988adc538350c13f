"""Nearest-neighbour graphs, sphere-of-influence graphs and union-find."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import PointCloud, Window, distance
from .phi import Phi

__all__ = [
    "UnionFind",
    "kdtree",
    "knn_neighbors",
    "knn_edges",
    "knn_edge_functional",
    "nn_distances",
    "sig_edges",
    "sig_functional",
]

# declared maximum SIG degree per dimension: 4 is sharp in 1-d, 29 is the
# published planar upper bound, 100 is a conservative 3-d ceiling
SIG_DEGREE_CAP = {1: 4, 2: 29, 3: 100}
KISSING = {1: 2, 2: 6, 3: 12}


class UnionFind:
    """Disjoint sets over ``0..n-1`` with union by size and path halving."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.components = n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.components -= 1
        return True

    def labels(self) -> np.ndarray:
        return np.array([self.find(i) for i in range(len(self.parent))], dtype=np.int64)

    def component_sizes(self) -> np.ndarray:
        """Size of the component containing each element."""
        return np.array([self.size[self.find(i)] for i in range(len(self.parent))])


def kdtree(window: Window, points: np.ndarray) -> cKDTree:
    if window.torus:
        return cKDTree(points, boxsize=np.asarray(window.sides))
    return cKDTree(points)


def knn_neighbors(cloud: PointCloud, k: int, tree: cKDTree | None = None):
    """The ``k`` nearest neighbours of every point, ties broken by point id.

    Returns ``(ids, dists)`` of shape ``(n, k)``.
    """
    n = cloud.n
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k + 1:
        raise ValueError(f"insufficient points: need more than k={k}, got {n}")
    tree = tree or kdtree(cloud.window, cloud.points)
    m = min(n, k + 1 + 8)
    dist, idx = tree.query(cloud.points, k=m)
    dist = np.asarray(dist).reshape(n, m)
    idx = np.asarray(idx).reshape(n, m)
    self_id = np.arange(n)[:, None]
    # push the query point itself behind everything else, then order by (distance, id)
    dist = np.where(idx == self_id, np.inf, dist)
    order = np.lexsort((idx, dist), axis=1)
    idx = np.take_along_axis(idx, order, axis=1)[:, :k]
    dist = np.take_along_axis(dist, order, axis=1)[:, :k]
    return idx, dist


def nn_distances(cloud: PointCloud, tree: cKDTree | None = None) -> np.ndarray:
    return knn_neighbors(cloud, 1, tree)[1][:, 0]


def knn_edges(cloud: PointCloud, k: int, direction: str = "out"):
    """Edge list ``(i, j, length)`` of the k-NN graph.

    ``direction="out"`` gives the directed graph (one row per out-edge);
    ``"undirected"`` collapses double edges and reports each edge once with
    ``i < j``.
    """
    idx, dist = knn_neighbors(cloud, k)
    src = np.repeat(np.arange(cloud.n), k)
    dst = idx.ravel()
    length = dist.ravel()
    if direction == "out":
        return src, dst, length
    if direction != "undirected":
        raise ValueError(f"unknown direction {direction!r}")
    a = np.minimum(src, dst)
    b = np.maximum(src, dst)
    key = a * cloud.n + b
    _, first = np.unique(key, return_index=True)
    return a[first], b[first], length[first]


def knn_edge_functional(cloud: PointCloud, k: int, phi: Phi, direction: str = "out") -> np.ndarray:
    """Sum of ``phi(|e|)`` over the edges at each point of the k-NN graph."""
    src, dst, length = knn_edges(cloud, k, direction)
    w = phi(length)
    out = np.bincount(src, weights=w, minlength=cloud.n)
    if direction == "undirected":
        out += np.bincount(dst, weights=w, minlength=cloud.n)
    return out


def knn_bound(k: int, d: int, direction: str, phi: Phi) -> float:
    if direction == "out":
        return k * phi.sup
    return k * (1 + KISSING.get(d, 2 * d * d)) * phi.sup


def sig_edges(cloud: PointCloud):
    """Edges ``(i, j, length)``, ``i < j``, of the sphere-of-influence graph."""
    n = cloud.n
    if n < 2:
        raise ValueError("SIG needs at least 2 points")
    tree = kdtree(cloud.window, cloud.points)
    rad = nn_distances(cloud, tree)
    reach = 2.0 * float(rad.max())
    if cloud.window.torus:
        reach = min(reach, cloud.window.diameter)
    pairs = tree.query_pairs(reach, output_type="ndarray")
    if pairs.size == 0:
        e = np.zeros(0, dtype=np.int64)
        return e, e, np.zeros(0), rad
    i, j = pairs[:, 0], pairs[:, 1]
    length = np.atleast_1d(distance(cloud.window, cloud.points[i], cloud.points[j]))
    keep = length <= rad[i] + rad[j]
    i, j, length = i[keep], j[keep], length[keep]
    swap = i > j
    i, j = np.where(swap, j, i), np.where(swap, i, j)
    order = np.lexsort((j, i))
    return i[order], j[order], length[order], rad


def sig_functional(cloud: PointCloud, variant: str = "reciprocal_component", phi: Phi | None = None) -> np.ndarray:
    """Per-point SIG statistic.

    ``reciprocal_component`` returns ``1 / |component(x)|`` so the values sum
    to the number of connected components; ``edge_stat`` returns the sum of
    ``phi`` over the SIG edges at ``x``.
    """
    i, j, length, _ = sig_edges(cloud)
    n = cloud.n
    if variant == "reciprocal_component":
        uf = UnionFind(n)
        for a, b in zip(i.tolist(), j.tolist()):
            uf.union(a, b)
        return 1.0 / uf.component_sizes()
    if variant == "edge_stat":
        if phi is None:
            raise ValueError("edge_stat needs a phi table")
        w = phi(length)
        return np.bincount(i, weights=w, minlength=n) + np.bincount(j, weights=w, minlength=n)
    raise ValueError(f"unknown SIG variant {variant!r}")
