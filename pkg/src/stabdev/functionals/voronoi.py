"""Planar Voronoi cells clipped to a box or wrapped on a torus.

Box windows use the reflection trick: mirroring the points across the four
sides makes every original cell bounded and exactly equal to its clipped
cell.  Torus windows tile periodic copies and keep the central cells.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError, Voronoi

from ..geometry import PointCloud, lattice_offsets

__all__ = ["VoronoiCells", "voronoi_cells", "voronoi_cell_functional", "polygon_area", "polygon_perimeter"]

STATISTICS = ("area", "vertex_count", "perimeter", "delaunay_degree")


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def polygon_perimeter(poly: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(poly - np.roll(poly, -1, axis=0), axis=1)))


def _ordered(poly: np.ndarray, tol: float) -> np.ndarray:
    """Counter-clockwise vertices with near-duplicates merged (cells are convex)."""
    c = poly.mean(axis=0)
    ang = np.arctan2(poly[:, 1] - c[1], poly[:, 0] - c[0])
    poly = poly[np.argsort(ang, kind="stable")]
    keep = [0]
    for i in range(1, len(poly)):
        if np.linalg.norm(poly[i] - poly[keep[-1]]) > tol:
            keep.append(i)
    if len(keep) > 1 and np.linalg.norm(poly[keep[-1]] - poly[keep[0]]) <= tol:
        keep.pop()
    return poly[keep]


@dataclass
class VoronoiCells:
    polygons: list
    neighbors: list

    def statistic(self, name: str) -> np.ndarray:
        if name == "area":
            return np.array([polygon_area(p) for p in self.polygons])
        if name == "perimeter":
            return np.array([polygon_perimeter(p) for p in self.polygons])
        if name == "vertex_count":
            return np.array([len(p) for p in self.polygons], dtype=float)
        if name == "delaunay_degree":
            return np.array([len(nb) for nb in self.neighbors], dtype=float)
        raise ValueError(f"unknown Voronoi statistic {name!r}")


def _check(cloud: PointCloud) -> None:
    if cloud.d != 2:
        raise ValueError("Voronoi functionals are implemented for d = 2 only")
    if cloud.n < 3:
        raise ValueError("degenerate configuration: need at least 3 points")
    centred = cloud.points - cloud.points.mean(axis=0)
    scale = max(cloud.window.sides)
    if np.linalg.matrix_rank(centred, tol=1e-12 * scale) < 2:
        raise ValueError("degenerate configuration: all points collinear")


def _cells_from(vor: Voronoi, n: int, tol: float) -> list:
    polys = []
    for i in range(n):
        region = vor.regions[vor.point_region[i]]
        if not region or -1 in region:
            raise RuntimeError("unbounded cell for an original point")
        polys.append(_ordered(vor.vertices[region], tol))
    return polys


def _box_cells(cloud: PointCloud) -> VoronoiCells:
    pts = cloud.points
    w, h = cloud.window.sides
    mirrors = [
        pts,
        np.column_stack([-pts[:, 0], pts[:, 1]]),
        np.column_stack([2 * w - pts[:, 0], pts[:, 1]]),
        np.column_stack([pts[:, 0], -pts[:, 1]]),
        np.column_stack([pts[:, 0], 2 * h - pts[:, 1]]),
    ]
    vor = Voronoi(np.vstack(mirrors))
    tol = 1e-12 * max(w, h)
    polys = _cells_from(vor, cloud.n, tol)
    polys = [np.clip(p, 0.0, [w, h]) for p in polys]
    tri = Delaunay(pts)
    indptr, nbr = tri.vertex_neighbor_vertices
    neighbors = [np.sort(nbr[indptr[i] : indptr[i + 1]]) for i in range(cloud.n)]
    return VoronoiCells(polys, neighbors)


def _torus_cells(cloud: PointCloud, reach: int) -> VoronoiCells:
    n = cloud.n
    sides = np.asarray(cloud.window.sides)
    offs = lattice_offsets(2, reach) * sides
    tiled = np.vstack([cloud.points + o for o in offs])
    vor = Voronoi(tiled)
    tol = 1e-12 * float(sides.max())
    polys = _cells_from(vor, n, tol)
    neighbors = [set() for _ in range(n)]
    for a, b in vor.ridge_points:
        if a < n:
            neighbors[a].add(int(b) % n)
        if b < n:
            neighbors[b].add(int(a) % n)
    nb = [np.array(sorted(s - {i}), dtype=np.int64) for i, s in enumerate(neighbors)]
    return VoronoiCells(polys, nb)


def voronoi_cells(cloud: PointCloud) -> VoronoiCells:
    _check(cloud)
    try:
        if not cloud.window.torus:
            return _box_cells(cloud)
        reach = 1 if cloud.n >= 50 else 2
        while True:
            cells = _torus_cells(cloud, reach)
            total = sum(polygon_area(p) for p in cells.polygons)
            if abs(total - cloud.window.volume) <= 1e-9 * max(1.0, cloud.window.volume) or reach >= 4:
                return cells
            reach += 1
    except QhullError as exc:
        raise ValueError(f"degenerate configuration: {exc}") from None


def voronoi_cell_functional(cloud: PointCloud, statistic: str = "area", cap: float | None = None) -> np.ndarray:
    """Statistic of each point's Voronoi cell, optionally capped at ``cap``."""
    if statistic not in STATISTICS:
        raise ValueError(f"unknown Voronoi statistic {statistic!r}")
    values = voronoi_cells(cloud).statistic(statistic)
    if cap is not None:
        values = np.minimum(values, cap)
    return values
