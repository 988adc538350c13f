"""Empirical measures, the replication engine and scaling-limit estimators."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import linprog

from .cumulants import JACKKNIFE_BLOCKS, estimate_cumulants
from .functionals import FunctionalSpec, rescale_evaluate
from .geometry import IntensityDensity, MarkConfig, PointCloud, Window, sample_poisson

__all__ = [
    "TestFunction",
    "integrate",
    "ReplicationParams",
    "ReplicationBatch",
    "run_replications",
    "jackknife_se",
    "cumulant_growth_check",
    "GrowthReport",
    "estimate_Q",
    "QEstimate",
    "estimate_V",
    "VEstimate",
    "integral_Q",
]


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function ``f`` on the window.

    kinds: ``constant`` (``value``), ``box`` (``value`` on ``[lo, hi)``),
    ``grid`` (piecewise constant on a regular grid of cells, ``table`` has
    one entry per cell), ``tabulated`` (multilinear interpolation of node
    values ``table`` over the window).
    """

    __test__ = False  # not a pytest class

    kind: str = "constant"
    value: float = 1.0
    lo: tuple = ()
    hi: tuple = ()
    table: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("constant", "box", "grid", "tabulated"):
            raise ValueError(f"unknown test-function kind {self.kind!r}")
        if self.kind in ("grid", "tabulated"):
            if self.table is None:
                raise ValueError(f"{self.kind} test function needs a table")
            t = np.array(self.table, dtype=float)
            if not np.all(np.isfinite(t)):
                raise ValueError("test function table must be finite")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)

    @classmethod
    def constant(cls, value: float = 1.0) -> "TestFunction":
        return cls("constant", float(value))

    @classmethod
    def box(cls, lo, hi, value: float = 1.0) -> "TestFunction":
        return cls("box", float(value), tuple(map(float, lo)), tuple(map(float, hi)))

    @property
    def sup(self) -> float:
        if self.kind in ("constant", "box"):
            return abs(self.value)
        return float(np.max(np.abs(self.table))) if self.table.size else 0.0

    def __call__(self, points, window: Window) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, window.d)
        if self.kind == "constant":
            return np.full(p.shape[0], self.value)
        if self.kind == "box":
            inside = np.all((p >= np.asarray(self.lo)) & (p < np.asarray(self.hi)), axis=1)
            return np.where(inside, self.value, 0.0)
        sides = np.asarray(window.sides)
        t = self.table
        if self.kind == "grid":
            shape = np.asarray(t.shape[: window.d])
            cell = np.clip(np.floor(p / sides * shape).astype(int), 0, shape - 1)
            return t[tuple(cell.T)]
        axes = [np.linspace(0.0, s, m) for s, m in zip(sides, t.shape)]
        return RegularGridInterpolator(axes, t)(np.clip(p, 0.0, sides))

    def describe(self) -> dict:
        out = {"kind": self.kind, "value": self.value}
        if self.kind == "box":
            out.update(lo=list(self.lo), hi=list(self.hi))
        if self.table is not None:
            out["table"] = self.table.tolist()
        return out


def integrate(f: TestFunction, cloud: PointCloud, values) -> float:
    """``<f, mu> = sum_i f(x_i) * xi(x_i)`` for the atomic measure of ``values``."""
    v = np.asarray(getattr(values, "values", values), dtype=float).ravel()
    if v.shape[0] != cloud.n:
        raise ValueError(f"values ({v.shape[0]}) misaligned with cloud ({cloud.n} points)")
    if cloud.n == 0:
        return 0.0
    return float(np.dot(f(cloud.points, cloud.window), v))


def marks_for(spec: FunctionalSpec, r_max: float = 0.0) -> MarkConfig:
    return MarkConfig(time=spec.needs_times, T=1.0, radius=spec.needs_radii, r_max=r_max)


@dataclass(frozen=True)
class ReplicationParams:
    """Everything that fixes the law of ``Y = <f, mu^xi_{lam kappa}>``."""

    spec: FunctionalSpec
    window: Window
    lam: float
    density: IntensityDensity = None
    f: TestFunction = field(default_factory=TestFunction.constant)
    seed: int = 0
    r_max: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.density is None:
            object.__setattr__(self, "density", IntensityDensity(float(self.lam)))
        elif self.density.lam != self.lam:
            object.__setattr__(self, "density", replace(self.density, lam=float(self.lam)))

    def with_lam(self, lam: float) -> "ReplicationParams":
        return replace(self, lam=float(lam), density=replace(self.density, lam=float(lam)))

    @property
    def marks(self) -> MarkConfig:
        return marks_for(self.spec, self.r_max)

    def sample(self, substream: int) -> PointCloud:
        return sample_poisson(self.window, self.density, self.marks, self.seed, substream)

    def replicate(self, substream: int) -> tuple:
        cloud = self.sample(substream)
        if cloud.n == 0:
            return 0.0, 0
        if cloud.n < _min_points(self.spec):
            # graphs on fewer points than they need (probability ~ exp(-lam)) carry no edges
            return 0.0, cloud.n
        vals = rescale_evaluate(self.spec, cloud, self.lam)
        return integrate(self.f, cloud, vals), cloud.n


def _min_points(spec: FunctionalSpec) -> int:
    if spec.family == "knn_edge":
        return int(spec.params["k"]) + 1
    if spec.family == "voronoi_cell":
        return 3
    if spec.family == "sig":
        return 2
    return 1


@dataclass
class ReplicationBatch:
    """``n`` independent draws of ``Y`` on substreams ``1..n``."""

    params: ReplicationParams
    values: np.ndarray
    counts: np.ndarray
    mean: float
    mean_se: float

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def centered(self) -> np.ndarray:
        return self.values - self.mean

    @property
    def seed(self) -> int:
        return self.params.seed

    def rows(self) -> list:
        return [
            {"replication_id": j + 1, "Y": float(y), "N_points": int(c)}
            for j, (y, c) in enumerate(zip(self.values, self.counts))
        ]


def _run_chunk(params: ReplicationParams, ids: Sequence[int]):
    out = np.empty(len(ids))
    cnt = np.empty(len(ids), dtype=np.int64)
    for j, sid in enumerate(ids):
        out[j], cnt[j] = params.replicate(sid)
    return out, cnt


def run_replications(params: ReplicationParams, n: int, threads: int = 1, first_substream: int = 1) -> ReplicationBatch:
    """Draw ``n`` replications; substream ``first_substream + j`` feeds replication ``j``.

    Output does not depend on ``threads``: every replication owns its stream
    and results are reassembled in substream order.
    """
    if n < 2:
        raise ValueError("need at least 2 replications")
    ids = list(range(first_substream, first_substream + n))
    if threads <= 1:
        values, counts = _run_chunk(params, ids)
    else:
        chunks = [ids[i::threads] for i in range(threads)]
        values = np.empty(n)
        counts = np.empty(n, dtype=np.int64)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, (v, c) in enumerate(pool.map(lambda ch: _run_chunk(params, ch), chunks)):
                values[i::threads] = v
                counts[i::threads] = c
    mean = float(np.sum(np.sort(values))) / n
    se = float(np.std(values, ddof=1) / math.sqrt(n))
    return ReplicationBatch(params, values, counts, mean, se)


def jackknife_se(y, stat, blocks: int = JACKKNIFE_BLOCKS) -> tuple:
    """``(estimate, se)`` of ``stat(y)`` by delete-a-group jackknife over contiguous groups."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    est = float(stat(y))
    g = min(blocks, n)
    parts = np.array_split(np.arange(n), g)
    loo = np.array([stat(np.delete(y, idx, axis=0)) for idx in parts])
    h = n / np.array([len(p) for p in parts])
    pseudo = h * est - (h - 1) * loo
    var = float(np.sum((pseudo - est) ** 2 / (h - 1)) / g)
    return est, math.sqrt(max(var, 0.0))


def _variance_ratio(batch: ReplicationBatch) -> tuple:
    """``sigma^2 / lam`` with jackknife SE, via power sums (fast leave-group-out)."""
    y = batch.values
    lam = batch.params.lam
    n = y.size
    c = batch.mean
    z = y - c
    est = float(np.var(z, ddof=1)) / lam
    g = min(JACKKNIFE_BLOCKS, n)
    parts = np.array_split(np.arange(n), g)
    s1 = np.array([z[p].sum() for p in parts])
    s2 = np.array([(z[p] ** 2).sum() for p in parts])
    m = np.array([len(p) for p in parts], dtype=float)
    S1, S2 = s1.sum(), s2.sum()
    rest = n - m
    loo = ((S2 - s2) - (S1 - s1) ** 2 / rest) / (rest - 1) / lam
    h = n / m
    pseudo = h * est - (h - 1) * loo
    se = math.sqrt(max(float(np.sum((pseudo - est) ** 2 / (h - 1)) / g), 0.0))
    return est, se


@dataclass
class GrowthReport:
    """``|c_k| / lam`` across ``lam`` and ``k`` plus the fitted envelope."""

    rows: list
    required_A: float
    envelope_A: float
    envelope_B: float
    flags: list
    d: int


def _envelope_lp(ks, lams, c_abs, d) -> tuple:
    """Least ``(A, B)`` with ``A, B >= 1`` such that ``|c_k| <= A B^k (k!)^(d+2) lam``.

    Solved as a linear program in ``(log A, log B)`` minimizing the summed
    slack of the envelope over the grid.
    """
    y = np.log(np.maximum(c_abs, 1e-300) / lams) - (d + 2) * np.array([math.lgamma(k + 1) for k in ks])
    A_ub = -np.column_stack([np.ones_like(y), np.asarray(ks, dtype=float)])
    res = linprog(
        c=[len(ks), float(np.sum(ks))],
        A_ub=A_ub,
        b_ub=-y,
        bounds=[(0, None), (0, None)],
        method="highs",
    )
    if not res.success:
        return math.nan, math.nan
    return float(math.exp(res.x[0])), float(math.exp(res.x[1]))


def cumulant_growth_check(
    params: ReplicationParams,
    lams: Sequence[float],
    K: int,
    n: int,
    threads: int = 1,
) -> GrowthReport:
    """Estimate ``c_2..c_K`` of ``Y`` at each ``lam`` and fit ``|c_k| <= A B^k (k!)^(d+2) lam``.

    ``required_A`` is the least ``A`` at ``B = 1``; the flags list the
    ``(lam, k)`` cells where ``|c_k|/lam`` exceeds its value at the smallest
    ``lam`` by more than 3 combined SEs (super-volume growth).
    """
    if K < 2 or K > 6:
        raise ValueError("growth check supports 2 <= K <= 6")
    d = params.window.d
    rows = []
    for lam in lams:
        batch = run_replications(params.with_lam(lam), n, threads)
        rep = estimate_cumulants(batch.values, K, "k-statistics")
        for k in range(2, K + 1):
            c = rep.estimate(k)
            rows.append({"lam": float(lam), "k": k, "c_hat": c, "se": rep.stderr(k),
                         "ratio": abs(c) / lam, "ratio_se": rep.stderr(k) / lam})
    ks = np.array([r["k"] for r in rows])
    lam_arr = np.array([r["lam"] for r in rows])
    c_abs = np.array([abs(r["c_hat"]) for r in rows])
    scale = np.exp((d + 2) * np.array([math.lgamma(k + 1) for k in ks])) * lam_arr
    required_A = float(np.max(c_abs / scale))
    A, B = _envelope_lp(ks, lam_arr, c_abs, d)
    flags = []
    base = {r["k"]: r for r in rows if r["lam"] == float(lams[0])}
    for r in rows:
        b = base[r["k"]]
        if r["ratio"] - b["ratio"] > 3.0 * math.hypot(r["ratio_se"], b["ratio_se"]):
            flags.append({"lam": r["lam"], "k": r["k"]})
    return GrowthReport(rows, required_A, A, B, flags, d)


@dataclass
class QEstimate:
    """Variance-per-volume limit with per-``lam`` diagnostics."""

    Q: float
    se: float
    rows: list
    slope: float
    relative_change: float
    relative_change_se: float


def richardson(h: np.ndarray, r: np.ndarray, se: np.ndarray) -> tuple:
    """Weighted linear fit ``r = a + b h``; returns ``(a, se_a, b)``."""
    h = np.asarray(h, dtype=float)
    r = np.asarray(r, dtype=float)
    se = np.asarray(se, dtype=float)
    if np.all(se == 0):
        w = np.ones_like(r)
    else:
        w = 1.0 / np.maximum(se, np.min(se[se > 0]) if np.any(se > 0) else 1.0) ** 2
    X = np.column_stack([np.ones_like(h), h])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ r)
    return float(beta[0]), float(math.sqrt(max(cov[0, 0], 0.0))) if np.any(se > 0) else 0.0, float(beta[1])


def estimate_Q(params: ReplicationParams, lams: Sequence[float], n: int, threads: int = 1) -> QEstimate:
    """``sigma^2_lam[f] / lam`` on a grid of ``lam`` and its extrapolated limit.

    The limit is a weighted linear extrapolation in ``h = lam^(-1/d)``.
    """
    lams = [float(x) for x in lams]
    if len(lams) < 3:
        raise ValueError("need at least 3 values of lam")
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValueError("lam grid must be strictly increasing")
    d = params.window.d
    rows = []
    for lam in lams:
        batch = run_replications(params.with_lam(lam), n, threads)
        r, se = _variance_ratio(batch)
        rows.append({"lam": lam, "var": r * lam, "ratio": r, "se": se, "mean": batch.mean})
    h = np.array([lam ** (-1.0 / d) for lam in lams])
    ratio = np.array([row["ratio"] for row in rows])
    se = np.array([row["se"] for row in rows])
    if np.all(ratio == 0):
        Q, Qse, slope = 0.0, 0.0, 0.0
    else:
        Q, Qse, slope = richardson(h, ratio, se)
    a, b = rows[-2], rows[-1]
    rel = (b["ratio"] - a["ratio"]) / a["ratio"] if a["ratio"] else 0.0
    rel_se = math.hypot(a["se"], b["se"]) / a["ratio"] if a["ratio"] else 0.0
    return QEstimate(Q, Qse, rows, slope, rel, rel_se)


@dataclass
class VEstimate:
    tau: float
    V: float
    se: float
    rows: list


def estimate_V(
    spec: FunctionalSpec,
    tau: float,
    d: int = 2,
    n: int = 2000,
    expected_points: Sequence[float] = (200.0, 400.0, 800.0),
    seed: int = 0,
    threads: int = 1,
    r_max: float = 0.0,
) -> VEstimate:
    """``V^xi(tau)``: ``Var(sum xi) / (tau |W|)`` for a homogeneous process on tori.

    Tori of side ``L`` are sized to hold ``expected_points`` points on average
    and the ratio is extrapolated linearly in ``1/L``.
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    marks = marks_for(spec, r_max)
    rows = []
    for j, m in enumerate(expected_points):
        L = (m / tau) ** (1.0 / d)
        window = Window((L,) * d, "torus")
        y = _run_unscaled(spec, window, IntensityDensity(float(m)), marks, n, seed, j, threads)
        est, se = jackknife_var(y)
        rows.append({"L": L, "expected_points": m, "V": est / (tau * L**d), "se": se / (tau * L**d)})
    if len(rows) == 1:
        return VEstimate(tau, rows[0]["V"], rows[0]["se"], rows)
    h = np.array([1.0 / r["L"] for r in rows])
    v = np.array([r["V"] for r in rows])
    se = np.array([r["se"] for r in rows])
    if np.all(se == 0):
        return VEstimate(tau, float(v[-1]), 0.0, rows)
    V, Vse, _ = richardson(h, v, se)
    return VEstimate(tau, V, Vse, rows)


def _run_unscaled(spec, window, density, marks, n, seed, tag, threads) -> np.ndarray:
    """``sum xi(x; P)`` at scale 1 for ``n`` draws; window ``tag`` selects nested substreams."""
    def one(sid):
        cloud = sample_poisson(window, density, marks, seed, sid + (tag << 32))
        if cloud.n < _min_points(spec):
            return 0.0
        return float(np.sum(rescale_evaluate(spec, cloud, 1.0).values))

    ids = range(1, n + 1)
    if threads <= 1:
        return np.array([one(s) for s in ids])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(one, ids)))


def jackknife_var(y: np.ndarray) -> tuple:
    return jackknife_se(y, lambda a: np.var(a, ddof=1))


def integral_Q(f: TestFunction, window: Window, density: IntensityDensity, taus, V_values, cells: int = 64) -> float:
    """``int f^2 V(kappa) kappa dx`` by midpoint quadrature, ``V`` interpolated linearly in ``tau``."""
    taus = np.asarray(taus, dtype=float)
    V_values = np.asarray(V_values, dtype=float)
    d = window.d
    axes = [(np.arange(cells) + 0.5) / cells * s for s in window.sides]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    kappa = density.kappa(window, mesh)
    V = np.interp(kappa, taus, V_values)
    dv = window.volume / cells**d
    return float(np.sum(f(mesh, window) ** 2 * V * kappa) * dv)
