"""Empirical radii of stabilization, decay-rate fits and two-point clustering.

A probe battery can only refute stabilization, so :func:`estimate_radius`
returns the smallest grid radius that no probe set refutes.  It is an upper
surrogate for the true radius, sized to recover the nearest-neighbour radius
exactly (up to grid resolution) for the 1-NN functional.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._rng import stream
from .cumulants import JACKKNIFE_BLOCKS
from .functionals import FunctionalSpec, rescale_evaluate
from .geometry import IntensityDensity, MarkConfig, PointCloud, Window, displacement, sample_poisson
from .statistics import marks_for

__all__ = [
    "ProbeConfig",
    "StabilizationSample",
    "estimate_radius",
    "collect_radii",
    "DecayFit",
    "fit_decay",
    "PairCorrelationTable",
    "pair_correlation_decay",
]


@dataclass(frozen=True)
class ProbeConfig:
    """Probe battery and radius grid ``r0 * g^j``.

    ``r0`` defaults to ``0.01 *`` the smallest window side.
    """

    m: int = 16
    shells: int = 3
    mark_extremes: bool = True
    r0: Optional[float] = None
    g: float = 1.1
    eps: float = 1e-9

    def __post_init__(self):
        if self.m < 1 or self.shells < 0:
            raise ValueError("need m >= 1 and shells >= 0")
        if not self.g > 1:
            raise ValueError("grid ratio g must be > 1")

    def grid(self, window: Window) -> np.ndarray:
        r0 = self.r0 if self.r0 is not None else 0.01 * min(window.sides)
        top = window.diameter
        j = int(math.ceil(math.log(top / r0) / math.log(self.g))) if top > r0 else 0
        return r0 * self.g ** np.arange(j + 1)


def _directions(d: int, m: int, turn: float) -> np.ndarray:
    """``m`` roughly uniform unit vectors, rotated by ``turn`` of a step."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        a = 2.0 * math.pi * (np.arange(m) + turn) / m
        return np.column_stack([np.cos(a), np.sin(a)])
    # Fibonacci sphere
    k = np.arange(m) + 0.5
    z = 1.0 - 2.0 * k / m
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k + 2.0 * math.pi * turn / m
    s = np.sqrt(1.0 - z * z)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


@dataclass
class StabilizationSample:
    """Estimated radii (original units) with censoring flags and probe budgets."""

    radii: np.ndarray
    censored: np.ndarray
    budget: np.ndarray
    lam: float
    d: int
    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.censored = np.asarray(self.censored, dtype=bool)
        self.budget = np.asarray(self.budget, dtype=np.int64)
        if np.any(self.radii < 0):
            raise ValueError("radii must be >= 0")

    @property
    def n(self) -> int:
        return self.radii.size

    def rescaled(self) -> np.ndarray:
        return self.lam ** (1.0 / self.d) * self.radii


class _Local:
    """The configuration around ``x`` in coordinates where ``x`` is at the centre.

    On the torus the neighbourhood is unwrapped into a box of side ``2 * reach``
    so probes can be placed in free space; on a box window the original window
    is kept (boundary effects are part of the functional).
    """

    def __init__(self, cloud: PointCloud, i: int, reach: float):
        self.cloud = cloud
        self.x = cloud.points[i]
        w = cloud.window
        disp = displacement(w, self.x, cloud.points).reshape(cloud.n, w.d)
        self.dist = np.sqrt(np.sum(disp * disp, axis=1))
        if w.torus:
            self.window = Window((2.0 * reach,) * w.d, "box")
            self.origin = np.full(w.d, reach)
            self.coords = disp + self.origin
        else:
            self.window = w
            self.origin = self.x
            self.coords = np.asarray(cloud.points)
        self.i = i

    def config(self, R: float, probes: Optional[np.ndarray] = None, times=None, radii=None):
        ids = np.flatnonzero(self.dist <= R)
        pos = int(np.searchsorted(ids, self.i))
        c = self.cloud
        pts = self.coords[ids]
        t = None if c.times is None else c.times[ids]
        r = None if c.radii is None else c.radii[ids]
        if probes is not None and len(probes):
            inside = self.window.contains(probes)
            probes = probes[inside]
            pts = np.vstack([pts, probes])
            if t is not None:
                t = np.concatenate([t, np.asarray(times)[inside]])
            if r is not None:
                r = np.concatenate([r, np.asarray(radii)[inside]])
        sub = PointCloud(points=pts, window=self.window, lam=c.lam, times=t, radii=r, marks=c.marks)
        return sub, pos


def _value(spec: FunctionalSpec, cloud: PointCloud, pos: int, lam: float) -> float:
    """``xi_lam`` at point ``pos``; small configurations count only existing edges.

    Returns ``nan`` when the functional is undefined on the configuration
    (e.g. a Voronoi tessellation of collinear points), which the caller
    treats as a refutation.
    """
    fam = spec.family
    n = cloud.n
    if fam == "knn_edge":
        k = int(spec.params["k"])
        if n <= k:
            if n == 1:
                return 0.0
            # fewer than k neighbours exist: use them all
            spec = FunctionalSpec("knn_edge", dict(spec.params, k=n - 1), bound=spec.c_xi(cloud.d))
    elif fam == "sig" and n == 1:
        return 1.0 if spec.params["variant"] == "reciprocal_component" else 0.0
    try:
        return float(rescale_evaluate(spec, cloud, lam).values[pos])
    except ValueError:
        return math.nan


def _probe_sets(cfg: ProbeConfig, local: _Local, R: float, marks: MarkConfig, times, radii):
    d = local.window.d
    rad = R * (1.0 + cfg.eps) + cfg.eps
    width = (cfg.r0 if cfg.r0 is not None else 0.01 * min(local.cloud.window.sides))
    shells = [(rad, 0.0)]
    for j in range(1, cfg.shells + 1):
        shells.append((rad + width * j / cfg.shells, j / (cfg.shells + 1)))
    variants = [(None, None)]
    if marks.time or marks.radius:
        variants = [("spread", None)]
    if cfg.mark_extremes and (marks.time or marks.radius):
        tmin = float(np.min(times)) if times is not None and len(times) else marks.T
        tmax = float(np.max(times)) if times is not None and len(times) else 0.0
        variants += [("early", tmin), ("late", tmax)]
    out = []
    for r, turn in shells:
        pts = local.origin + r * _directions(d, cfg.m, turn)
        m = pts.shape[0]
        for kind, ref in variants:
            t = rr = None
            if kind == "early":
                # strictly before every point of the cloud, distinct among themselves
                t = ref * np.arange(m) / (m + 1)
                rr = np.full(m, marks.r_max)
            elif kind == "late":
                t = marks.T - (marks.T - ref) * np.arange(m) / (m + 1)
                rr = np.zeros(m)
            elif kind == "spread":
                # without extremes, marks spread evenly over their ranges
                t = marks.T * (np.arange(m) + 0.5) / m
                rr = np.full(m, 0.5 * marks.r_max)
            out.append((pts, t if marks.time else None, rr if marks.radius else None))
    return out


def estimate_radius(
    spec: FunctionalSpec,
    cloud: PointCloud,
    i: int,
    lam: float = 1.0,
    cfg: ProbeConfig = ProbeConfig(),
) -> tuple:
    """``(R, censored, evaluations)`` for point ``i`` of ``cloud``.

    ``xi_lam`` is evaluated on ``cloud`` in its own coordinates; radii are in
    those coordinates too.  ``R`` is the smallest grid radius such that
    ``xi(x; (X cap B_R(x)) cup Y) == xi(x; X cap B_R(x))`` for every probe set
    ``Y`` of the battery, all placed outside ``B_R(x)``.
    """
    if not isinstance(i, (int, np.integer)) or not 0 <= i < cloud.n:
        raise ValueError("x is not a point of the cloud")
    grid = cfg.grid(cloud.window)
    w = cloud.window
    half = min(w.sides) / 2.0
    width = cfg.r0 if cfg.r0 is not None else 0.01 * min(w.sides)
    used = 0
    local = _Local(cloud, int(i), reach=grid[-1] * 1.01 + 2.0 * width)
    marks = cloud.marks
    for R in grid:
        if w.torus and R + 1.5 * width >= half:
            break
        base_cloud, pos = local.config(R)
        base = _value(spec, base_cloud, pos, lam)
        used += 1
        ok = not math.isnan(base)
        if ok:
            for pts, t, r in _probe_sets(cfg, local, R, marks, base_cloud.times, base_cloud.radii):
                probe_cloud, _ = local.config(R, pts, t, r)
                used += 1
                if _value(spec, probe_cloud, pos, lam) != base:
                    ok = False
                    break
        if ok:
            return float(R), False, used
    return float(w.diameter), True, used


def collect_radii(
    spec: FunctionalSpec,
    window: Window,
    lam: float,
    n: int,
    seed: int = 0,
    cfg: ProbeConfig = ProbeConfig(),
    threads: int = 1,
    r_max: float = 0.0,
) -> StabilizationSample:
    """Radii at the first point of ``n`` independent clouds (empty clouds skipped).

    Points are i.i.d. given the count, so point 0 is a uniformly chosen point.
    """
    density = IntensityDensity(float(lam))
    marks = marks_for(spec, r_max)

    def one(sid):
        cloud = sample_poisson(window, density, marks, seed, sid)
        if cloud.n == 0:
            return None
        return estimate_radius(spec, cloud, 0, lam, cfg)

    ids = range(1, n + 1)
    if threads <= 1:
        res = [one(s) for s in ids]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            res = list(pool.map(one, ids))
    keep = [(s, r) for s, r in zip(ids, res) if r is not None]
    return StabilizationSample(
        radii=[r[0] for _, r in keep],
        censored=[r[1] for _, r in keep],
        budget=[r[2] for _, r in keep],
        lam=float(lam),
        d=window.d,
        ids=np.array([s for s, _ in keep], dtype=np.int64),
    )


@dataclass
class DecayFit:
    """Survival curve of rescaled radii and the fit ``log P(R >= t) = log L - alpha t``."""

    t: np.ndarray
    survival: np.ndarray
    alpha_hat: float
    L_hat: float
    residual: float
    censored_fraction: float
    fit_range: tuple

    def rows(self) -> list:
        return [
            {"t": float(a), "survival": float(s), "log_survival": float(math.log(s)) if s > 0 else -math.inf}
            for a, s in zip(self.t, self.survival)
        ]

    def summary(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "L_hat": self.L_hat,
            "residual": self.residual,
            "censored_fraction": self.censored_fraction,
        }


def fit_decay(sample, lam: Optional[float] = None, d: Optional[int] = None, min_samples: int = 100) -> DecayFit:
    """Fit an exponential tail to the rescaled radii ``lam^(1/d) R``.

    ``sample`` is a :class:`StabilizationSample` or a plain array of
    already-rescaled radii (then ``lam`` and ``d`` are not needed).  Censored
    radii count in the survival curve but the fit uses only ``t`` values
    below the smallest censored radius where ``P >= 10/n``, by least squares
    on ``log P`` weighted with its inverse binomial variance.
    """
    if isinstance(sample, StabilizationSample):
        lam = sample.lam if lam is None else lam
        t_all = lam ** (1.0 / sample.d) * sample.radii
        cens = sample.censored
    else:
        t_all = np.asarray(sample, dtype=float)
        if lam is not None:
            t_all = lam ** (1.0 / (d or 1)) * t_all
        cens = np.zeros(t_all.size, dtype=bool)
    n = t_all.size
    unc = t_all[~cens]
    if unc.size < min_samples:
        raise ValueError(f"too few samples: {unc.size} uncensored, need {min_samples}")
    if np.all(unc == unc[0]):
        raise ValueError("degenerate curve: all radii identical")
    t = np.unique(unc)
    srt = np.sort(t_all)
    surv = (n - np.searchsorted(srt, t, side="left")) / n
    top = float(np.min(t_all[cens])) if np.any(cens) else math.inf
    use = (surv >= 10.0 / n) & (t < top)
    if np.count_nonzero(use) < 2:
        raise ValueError("degenerate curve: fewer than 2 fit points")
    x = t[use]
    p = surv[use]
    y = np.log(p)
    # binomial delta-method variance of log P is (1 - P) / (n P)
    wt = n * p / np.maximum(1.0 - p, 1.0 / n)
    slope, intercept = np.polyfit(x, y, 1, w=np.sqrt(wt))
    resid = float(np.sqrt(np.average((y - (intercept + slope * x)) ** 2, weights=wt)))
    return DecayFit(t, surv, float(-slope), float(math.exp(intercept)), resid, float(np.mean(cens)), (float(x[0]), float(x[-1])))


@dataclass
class PairCorrelationTable:
    """``|m(v1, v2) - m(v1) m(v2)|`` against separation, with jackknife SEs."""

    separations: np.ndarray
    rescaled: np.ndarray
    diff: np.ndarray
    se: np.ndarray
    beta_hat: float
    n_reps: int

    def rows(self) -> list:
        return [
            {"delta": float(a), "delta_rescaled": float(b), "abs_diff": float(c), "se": float(s)}
            for a, b, c, s in zip(self.separations, self.rescaled, self.diff, self.se)
        ]


def _with_points(cloud: PointCloud, extra: np.ndarray, times, radii) -> PointCloud:
    pts = np.vstack([cloud.points, extra])
    t = None if cloud.times is None else np.concatenate([cloud.times, times])
    r = None if cloud.radii is None else np.concatenate([cloud.radii, radii])
    return cloud.replace(points=pts, times=t, radii=r)


def _pair_terms(spec, params, sid, v1, v2s):
    """Per-replication ``(a*b, a1, a2)`` for every second point in ``v2s``."""
    window, density, marks, seed, lam = params
    cloud = sample_poisson(window, density, marks, seed, sid)
    rng = stream(seed, sid, 1)
    m = 1 + len(v2s)
    t = rng.random(m) * marks.T if marks.time else None
    r = rng.random(m) * marks.r_max if marks.radius else None

    def val(extra_idx):
        pts = np.vstack([v1[None, :]] + [v2s[j][None, :] for j in extra_idx])
        sel = [0] + [1 + j for j in extra_idx]
        c = _with_points(cloud, pts, None if t is None else t[sel], None if r is None else r[sel])
        return [_value(spec, c, cloud.n + q, lam) for q in range(len(sel))]

    a1 = val([])[0]
    out = np.empty((len(v2s), 3))
    for j in range(len(v2s)):
        # v2 alone, then both together
        c2 = _with_points(cloud, v2s[j][None, :], None if t is None else t[1 + j : 2 + j], None if r is None else r[1 + j : 2 + j])
        a2 = _value(spec, c2, cloud.n, lam)
        both = val([j])
        out[j] = (both[0] * both[1], a1, a2)
    return out


def pair_correlation_decay(
    spec: FunctionalSpec,
    lam: float,
    separations: Sequence[float],
    n_reps: int = 1000,
    window: Optional[Window] = None,
    seed: int = 0,
    threads: int = 1,
    r_max: float = 0.0,
    blocks: int = JACKKNIFE_BLOCKS,
) -> PairCorrelationTable:
    """Two-point clustering ``|m(v1,v2) - m(v1) m(v2)|`` on a torus.

    ``v1`` sits at the window centre and ``v2 = v1 + delta e_1``.  All
    separations share the same clouds, which makes the differences across
    ``delta`` positively correlated and the monotonicity check sharper.
    ``beta_hat`` is the negative slope of ``log|diff|`` against
    ``lam^(1/d) delta`` over the separations with ``|diff| > 3 SE`` (``nan``
    if fewer than two qualify).
    """
    window = window or Window.unit(2, "torus")
    if not window.torus:
        raise ValueError("pair correlation runs on a torus window")
    seps = np.asarray(separations, dtype=float)
    if np.any(seps <= 0):
        raise ValueError("separations must be positive")
    if np.any(seps >= window.sides[0] / 2.0):
        raise ValueError("separation exceeds the window (must be below half the side)")
    if n_reps < 2:
        raise ValueError("need at least 2 replications")
    d = window.d
    centre = np.asarray(window.sides, dtype=float) / 2.0
    e1 = np.zeros(d)
    e1[0] = 1.0
    v2s = [centre + s * e1 for s in seps]
    params = (window, IntensityDensity(float(lam)), marks_for(spec, r_max), seed, float(lam))
    ids = range(1, n_reps + 1)
    if threads <= 1:
        terms = np.array([_pair_terms(spec, params, s, centre, v2s) for s in ids])
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            terms = np.array(list(pool.map(lambda s: _pair_terms(spec, params, s, centre, v2s), ids)))
    # terms: (n_reps, n_sep, 3)

    def stat(block):
        m = block.mean(axis=0)
        return m[:, 0] - m[:, 1] * m[:, 2]

    est = stat(terms)
    g = min(blocks, n_reps)
    parts = np.array_split(np.arange(n_reps), g)
    loo = np.array([stat(np.delete(terms, p, axis=0)) for p in parts])
    h = n_reps / np.array([len(p) for p in parts])
    pseudo = h[:, None] * est[None, :] - (h[:, None] - 1) * loo
    se = np.sqrt(np.maximum(np.sum((pseudo - est) ** 2 / (h[:, None] - 1), axis=0) / g, 0.0))
    diff = np.abs(est)
    rescaled = lam ** (1.0 / d) * seps
    sig = diff > 3.0 * se
    beta = math.nan
    if np.count_nonzero(sig) >= 2:
        beta = float(-np.polyfit(rescaled[sig], np.log(diff[sig]), 1)[0])
    return PairCorrelationTable(seps, rescaled, diff, se, beta, n_reps)
