"""Windows, intensity densities, marked Poisson sampling and a uniform-grid index.

Points live in the rectangle ``[0, L_1) x ... x [0, L_d)``.  A window is
either a ``box`` (Euclidean distance) or a ``torus`` (per-axis wraparound).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._rng import check_seed, stream

__all__ = [
    "Window",
    "PiecewiseLinear1D",
    "IntensityDensity",
    "MarkConfig",
    "PointCloud",
    "GridIndex",
    "sample_poisson",
    "distance",
    "displacement",
    "range_query",
    "brute_force_range",
]

MASS_TOL = 1e-9


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle anchored at the origin.

    Args:
        sides: side length per axis; the dimension is ``len(sides)``.
        topology: ``"box"`` or ``"torus"``.
    """

    sides: tuple
    topology: str = "box"

    def __post_init__(self):
        sides = tuple(float(s) for s in np.atleast_1d(self.sides))
        if len(sides) < 1:
            raise ValueError("window needs at least one axis")
        if any(not math.isfinite(s) or s <= 0.0 for s in sides):
            raise ValueError("degenerate window: all side lengths must be > 0")
        if self.topology not in ("box", "torus"):
            raise ValueError(f"unknown topology {self.topology!r}")
        object.__setattr__(self, "sides", sides)

    @classmethod
    def unit(cls, d: int, topology: str = "box") -> "Window":
        return cls((1.0,) * d, topology)

    @property
    def d(self) -> int:
        return len(self.sides)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def torus(self) -> bool:
        return self.topology == "torus"

    @property
    def diameter(self) -> float:
        """Largest possible distance between two points of the window."""
        s = np.asarray(self.sides)
        if self.torus:
            s = s / 2.0
        return float(np.sqrt(np.sum(s * s)))

    def scaled(self, factor: float) -> "Window":
        return Window(tuple(s * factor for s in self.sides), self.topology)

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= 0.0) & (p < np.asarray(self.sides)), axis=1)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Reduce coordinates modulo the side lengths (torus only)."""
        return np.mod(points, np.asarray(self.sides))


def displacement(window: Window, p, q) -> np.ndarray:
    """Vector ``q - p``; on a torus each axis takes the shortest wraparound."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1:] != (window.d,) or q.shape[-1:] != (window.d,):
        raise ValueError(
            f"dimension mismatch: window is {window.d}-d, got shapes {p.shape} and {q.shape}"
        )
    delta = q - p
    if window.torus:
        sides = np.asarray(window.sides)
        delta = delta - sides * np.round(delta / sides)
    return delta


def distance(window: Window, p, q):
    """Distance between ``p`` and ``q`` (broadcasts over leading axes)."""
    delta = displacement(window, p, q)
    out = np.sqrt(np.sum(delta * delta, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PiecewiseLinear1D:
    """Nonnegative piecewise-linear density on ``[knots[0], knots[-1]]``."""

    knots: tuple
    values: tuple

    def __post_init__(self):
        x = np.asarray(self.knots, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("knots and values must be 1-d of equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise ValueError("density values must be finite and >= 0")
        object.__setattr__(self, "knots", tuple(x))
        object.__setattr__(self, "values", tuple(y))

    @property
    def _x(self):
        return np.asarray(self.knots)

    @property
    def _y(self):
        return np.asarray(self.values)

    def segment_masses(self) -> np.ndarray:
        x, y = self._x, self._y
        return 0.5 * (y[1:] + y[:-1]) * np.diff(x)

    @property
    def mass(self) -> float:
        return float(np.sum(self.segment_masses()))

    @property
    def sup(self) -> float:
        return float(np.max(self._y))

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self._x, self._y, left=0.0, right=0.0)

    def ppf(self, u) -> np.ndarray:
        """Inverse CDF of the normalized density, evaluated at ``u`` in [0, 1)."""
        x, y = self._x, self._y
        seg = self.segment_masses()
        cum = np.concatenate(([0.0], np.cumsum(seg)))
        target = np.asarray(u, dtype=float) * cum[-1]
        i = np.searchsorted(cum[1:], target, side="right")
        i = np.minimum(i, len(seg) - 1)
        c = target - cum[i]
        a = y[i]
        b = (y[i + 1] - y[i]) / (x[i + 1] - x[i])
        disc = np.maximum(a * a + 2.0 * b * c, 0.0)
        denom = a + np.sqrt(disc)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(denom > 0, 2.0 * c / denom, 0.0)
        return np.clip(x[i] + step, x[i], x[i + 1])


@dataclass(frozen=True)
class IntensityDensity:
    """Intensity ``lam * kappa`` with ``kappa`` a probability density on the window.

    ``kind="uniform"`` means ``kappa = 1/|W|``.  ``kind="product"`` means
    ``kappa(x) = prod_i axes[i](x_i)``; the product must integrate to one.
    """

    lam: float
    kind: str = "uniform"
    axes: Optional[tuple] = None

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"intensity scale must be positive and finite, got {self.lam}")
        if self.kind not in ("uniform", "product"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "product":
            if not self.axes:
                raise ValueError("product density needs one PiecewiseLinear1D per axis")
            object.__setattr__(self, "axes", tuple(self.axes))

    def mass(self, window: Window) -> float:
        if self.kind == "uniform":
            return 1.0
        return float(np.prod([a.mass for a in self.axes]))

    def sup(self, window: Window) -> float:
        if self.kind == "uniform":
            return 1.0 / window.volume
        return float(np.prod([a.sup for a in self.axes]))

    def check(self, window: Window) -> None:
        if self.kind == "product":
            if len(self.axes) != window.d:
                raise ValueError("dimension mismatch between density axes and window")
            for axis, side in zip(self.axes, window.sides):
                if abs(axis.knots[0]) > 1e-12 or abs(axis.knots[-1] - side) > 1e-12 * side:
                    raise ValueError("density axis support must span the window side")
        m = self.mass(window)
        if abs(m - 1.0) > MASS_TOL:
            raise ValueError(f"density mass != 1 (got {m:.12g})")

    def kappa(self, window: Window, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "uniform":
            return np.full(p.shape[0], 1.0 / window.volume)
        out = np.ones(p.shape[0])
        for j, axis in enumerate(self.axes):
            out *= axis(p[:, j])
        return out

    def sample_locations(self, window: Window, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((n, window.d))
        if self.kind == "uniform":
            pts = u * np.asarray(window.sides)
        else:
            pts = np.column_stack([a.ppf(u[:, j]) for j, a in enumerate(self.axes)])
        # u * side can round up to side itself
        sides = np.asarray(window.sides)
        return np.where(pts >= sides, np.nextafter(sides, 0.0), pts)


@dataclass(frozen=True)
class MarkConfig:
    """Which i.i.d. uniform marks to attach: time in [0, T], radius in [0, r_max]."""

    time: bool = False
    T: float = 1.0
    radius: bool = False
    r_max: float = 0.0

    def __post_init__(self):
        if self.time and not self.T > 0:
            raise ValueError("time-mark horizon T must be > 0")
        if self.radius and self.r_max < 0:
            raise ValueError("r_max must be >= 0")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable (optionally marked) point configuration in a window."""

    points: np.ndarray
    window: Window
    lam: float = float("nan")
    intensity: Optional[IntensityDensity] = None
    times: Optional[np.ndarray] = None
    radii: Optional[np.ndarray] = None
    marks: MarkConfig = field(default_factory=MarkConfig)
    seed: Optional[int] = None
    substream: Optional[int] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, self.window.d)
        if not np.all(self.window.contains(pts)):
            raise ValueError("all points must lie inside the window")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        for name, hi in (("times", self.marks.T), ("radii", self.marks.r_max)):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=float).reshape(-1)
            if arr.shape[0] != pts.shape[0]:
                raise ValueError(f"{name} must have one entry per point")
            if np.any(arr < 0) or (name == "times" and np.any(arr > hi)):
                raise ValueError(f"{name} outside the declared mark range")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.window.d

    def replace(self, **changes) -> "PointCloud":
        kw = {
            "points": self.points,
            "window": self.window,
            "lam": self.lam,
            "intensity": self.intensity,
            "times": self.times,
            "radii": self.radii,
            "marks": self.marks,
            "seed": self.seed,
            "substream": self.substream,
        }
        kw.update(changes)
        return PointCloud(**kw)

    def subset(self, ids) -> "PointCloud":
        ids = np.asarray(ids, dtype=int)
        return self.replace(
            points=self.points[ids],
            times=None if self.times is None else self.times[ids],
            radii=None if self.radii is None else self.radii[ids],
        )

    def shifted(self, shift) -> "PointCloud":
        """Translate every point by ``shift`` (torus windows only)."""
        if not self.window.torus:
            raise ValueError("shifts are only defined on the torus")
        pts = self.window.wrap(self.points + np.asarray(shift, dtype=float))
        sides = np.asarray(self.window.sides)
        pts = np.where(pts >= sides, 0.0, pts)
        return self.replace(points=pts)


def _distinct_times(n: int, T: float, rng: np.random.Generator) -> np.ndarray:
    t = rng.random(n) * T
    # ties have probability zero; redraw them anyway so time order is strict
    while n > 1:
        order = np.sort(t)
        if np.all(np.diff(order) > 0):
            break
        _, first, counts = np.unique(t, return_index=True, return_counts=True)
        dup = np.setdiff1d(np.arange(n), first[counts == 1])
        t[dup] = rng.random(dup.size) * T
    return t


def sample_poisson(
    window: Window,
    intensity: IntensityDensity,
    marks: Optional[MarkConfig] = None,
    seed: int = 0,
    substream: int = 0,
) -> PointCloud:
    """Draw a (marked) Poisson process with intensity ``lam * kappa`` on ``window``.

    The point count is Poisson(lam); given the count, locations are i.i.d.
    from ``kappa`` by per-axis inversion, and marks are i.i.d. uniform and
    independent of the locations.  The result depends only on
    ``(seed, substream)``.
    """
    marks = marks or MarkConfig()
    intensity.check(window)
    rng = stream(check_seed(seed), substream)
    n = int(rng.poisson(intensity.lam * intensity.mass(window)))
    pts = intensity.sample_locations(window, n, rng)
    times = _distinct_times(n, marks.T, rng) if marks.time else None
    radii = rng.random(n) * marks.r_max if marks.radius else None
    return PointCloud(
        points=pts,
        window=window,
        lam=intensity.lam,
        intensity=intensity,
        times=times,
        radii=radii,
        marks=marks,
        seed=seed,
        substream=substream,
    )


class GridIndex:
    """Uniform grid over the window with per-cell buckets of point ids.

    The default cell side is ``(volume / max(n, 1)) ** (1/d)`` so a cell holds
    O(1) points on average.  The index is read-only once built.
    """

    def __init__(self, window: Window, points, h: Optional[float] = None):
        self.window = window
        self.points = np.asarray(points, dtype=float).reshape(-1, window.d)
        n = self.points.shape[0]
        if h is None:
            h = (window.volume / max(n, 1)) ** (1.0 / window.d)
        if not h > 0:
            raise ValueError("cell side must be positive")
        sides = np.asarray(window.sides)
        self.ncells = np.maximum(np.floor(sides / h), 1).astype(np.int64)
        self.cell_side = sides / self.ncells
        cells = self._cell_of(self.points)
        self._strides = np.concatenate(([1], np.cumprod(self.ncells[:-1]))).astype(np.int64)
        lin = cells @ self._strides if n else np.zeros(0, dtype=np.int64)
        order = np.argsort(lin, kind="stable")
        self._ids = order
        total = int(np.prod(self.ncells))
        self._starts = np.searchsorted(lin[order], np.arange(total + 1))

    def _cell_of(self, pts: np.ndarray) -> np.ndarray:
        c = np.floor(pts / self.cell_side).astype(np.int64)
        return np.clip(c, 0, self.ncells - 1)

    def bucket(self, cell) -> np.ndarray:
        lin = int(np.asarray(cell, dtype=np.int64) @ self._strides)
        return self._ids[self._starts[lin] : self._starts[lin + 1]]

    def _axis_cells(self, axis: int, lo: float, hi: float) -> np.ndarray:
        nc = int(self.ncells[axis])
        a = int(math.floor(lo / self.cell_side[axis]))
        b = int(math.floor(hi / self.cell_side[axis]))
        if self.window.torus:
            if b - a + 1 >= nc:
                return np.arange(nc)
            return np.unique(np.mod(np.arange(a, b + 1), nc))
        return np.arange(max(a, 0), min(b, nc - 1) + 1)

    def query(self, center, r: float) -> np.ndarray:
        """Sorted ids of points within distance ``r`` of ``center``."""
        if r < 0:
            raise ValueError("query radius must be >= 0")
        c = np.asarray(center, dtype=float).reshape(self.window.d)
        axes = [self._axis_cells(j, c[j] - r, c[j] + r) for j in range(self.window.d)]
        if any(a.size == 0 for a in axes):
            return np.zeros(0, dtype=np.int64)
        lin = np.zeros(1, dtype=np.int64)
        for j, a in enumerate(axes):
            lin = (lin[:, None] + a[None, :] * self._strides[j]).ravel()
        chunks = [self._ids[self._starts[k] : self._starts[k + 1]] for k in lin]
        cand = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
        if cand.size == 0:
            return cand.astype(np.int64)
        keep = distance(self.window, c, self.points[cand]) <= r
        return np.sort(cand[np.atleast_1d(keep)])


def range_query(index: GridIndex, center, r: float) -> np.ndarray:
    return index.query(center, r)


def brute_force_range(window: Window, points, center, r: float) -> np.ndarray:
    """O(n) reference scan for :func:`range_query`."""
    pts = np.asarray(points, dtype=float).reshape(-1, window.d)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    dist = np.atleast_1d(distance(window, np.asarray(center, dtype=float), pts))
    return np.flatnonzero(dist <= r)


def lattice_offsets(d: int, reach: int = 1) -> np.ndarray:
    """Integer translation vectors ``{-reach..reach}^d``, zero vector first."""
    offs = [o for o in itertools.product(range(-reach, reach + 1), repeat=d)]
    offs.sort(key=lambda o: (any(o), o))
    return np.asarray(offs, dtype=float)
