import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from stabdev.geometry import (
    GridIndex,
    IntensityDensity,
    MarkConfig,
    PiecewiseLinear1D,
    PointCloud,
    Window,
    brute_force_range,
    distance,
    range_query,
    sample_poisson,
)


def test_distance_box_and_torus():
    assert distance(Window.unit(1, "box"), [0.1], [0.9]) == pytest.approx(0.8)
    assert distance(Window.unit(1, "torus"), [0.1], [0.9]) == pytest.approx(0.2)
    assert distance(Window.unit(2, "torus"), [0.3, 0.3], [0.3, 0.3]) == 0.0


def test_degenerate_window_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        Window((0.0, 1.0))
    with pytest.raises(ValueError, match="degenerate"):
        Window((1e-300 * 0.0,))


def test_mean_count_matches_intensity():
    w = Window.unit(2)
    dens = IntensityDensity(100.0)
    counts = np.array([sample_poisson(w, dens, seed=3, substream=s).n for s in range(20000)])
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - 100.0) < 3 * se


@pytest.mark.parametrize("lam", [5.0, 50.0])
def test_count_distribution_chi_square(lam):
    w = Window.unit(2, "torus")
    counts = np.array([sample_poisson(w, IntensityDensity(lam), seed=11, substream=s).n for s in range(10000)])
    # pool bins so every expected count is at least 5
    lo, hi = int(stats.poisson.ppf(1e-4, lam)), int(stats.poisson.ppf(1 - 1e-4, lam))
    edges = np.arange(lo, hi + 2)
    obs = np.array([np.sum(counts <= lo)] + [np.sum(counts == k) for k in edges[1:-1]] + [np.sum(counts >= hi + 1)])
    p = np.concatenate(([stats.poisson.cdf(lo, lam)], stats.poisson.pmf(edges[1:-1], lam), [stats.poisson.sf(hi, lam)]))
    exp = p * counts.size
    keep = exp >= 5
    o = np.append(obs[keep], obs[~keep].sum())
    e = np.append(exp[keep], exp[~keep].sum())
    if e[-1] == 0:
        o, e = o[:-1], e[:-1]
    e *= o.sum() / e.sum()
    assert stats.chisquare(o, e).pvalue > 1e-3


def test_location_marginal_ks():
    w = Window((2.0, 0.5))
    pts = np.concatenate([sample_poisson(w, IntensityDensity(100.0), seed=5, substream=s).points for s in range(120)])
    pts = pts[:10000]
    for j, side in enumerate(w.sides):
        ks = stats.kstest(pts[:, j] / side, "uniform").statistic
        assert ks < 1.63 / math.sqrt(len(pts))


def test_product_density_marginal():
    axis = PiecewiseLinear1D((0.0, 1.0), (0.0, 2.0))  # density 2x on [0,1]
    flat = PiecewiseLinear1D((0.0, 1.0), (1.0, 1.0))
    dens = IntensityDensity(4000.0, "product", (axis, flat))
    c = sample_poisson(Window.unit(2), dens, seed=1)
    ks = stats.kstest(c.points[:, 0], lambda x: x * x).statistic
    assert ks < 1.63 / math.sqrt(c.n)


def test_same_seed_bit_identical():
    w = Window.unit(2, "torus")
    dens = IntensityDensity(30.0)
    m = MarkConfig(time=True, radius=True, r_max=0.1)
    a = sample_poisson(w, dens, m, seed=2**64 - 1, substream=7)
    b = sample_poisson(w, dens, m, seed=2**64 - 1, substream=7)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.times.tobytes() == b.times.tobytes()
    assert a.radii.tobytes() == b.radii.tobytes()
    c = sample_poisson(w, dens, m, seed=2**64 - 1, substream=8)
    assert c.points.tobytes() != a.points.tobytes()


def test_marks_in_range():
    m = MarkConfig(time=True, T=1.0, radius=True, r_max=0.25)
    c = sample_poisson(Window.unit(2), IntensityDensity(200.0), m, seed=0)
    assert np.all((c.times >= 0) & (c.times <= 1))
    assert np.all((c.radii >= 0) & (c.radii <= 0.25))
    assert len(np.unique(c.times)) == c.n


def test_points_outside_window_rejected():
    with pytest.raises(ValueError):
        PointCloud(np.array([[1.5, 0.2]]), Window.unit(2))


def test_range_query_examples():
    w = Window.unit(2)
    pts = np.random.default_rng(0).random((100, 2))
    idx = GridIndex(w, pts)
    assert list(range_query(idx, pts[17], 0.0)) == [17]
    assert sorted(range_query(idx, pts[3], w.diameter)) == list(range(100))
    assert sorted(range_query(idx, [0.5, 0.5], 0.2)) == sorted(brute_force_range(w, pts, [0.5, 0.5], 0.2))


def test_range_query_exhaustive_1000_points():
    rng = np.random.default_rng(42)
    for topo in ("box", "torus"):
        w = Window((1.0, 2.0), topo)
        pts = rng.random((1000, 2)) * np.array(w.sides)
        idx = GridIndex(w, pts)
        for r in (0.0, 0.01, 0.05, 0.3, 1.2):
            for c in pts[:40]:
                assert sorted(range_query(idx, c, r)) == sorted(brute_force_range(w, pts, c, r))


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(0, 120),
    d=st.integers(1, 3),
    topo=st.sampled_from(["box", "torus"]),
    r=st.floats(0.0, 1.5),
    seed=st.integers(0, 2**32 - 1),
    h=st.one_of(st.none(), st.floats(0.05, 0.8)),
)
def test_range_query_matches_brute_force(n, d, topo, r, seed, h):
    rng = np.random.default_rng(seed)
    w = Window(tuple(rng.uniform(0.5, 1.5, d)), topo)
    pts = rng.random((n, d)) * np.array(w.sides)
    idx = GridIndex(w, pts, h)
    c = rng.random(d) * np.array(w.sides)
    assert sorted(range_query(idx, c, r)) == sorted(brute_force_range(w, pts, c, r))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 200), seed=st.integers(0, 1000))
def test_grid_buckets_partition_ids(n, seed):
    w = Window((1.0, 1.0), "torus")
    pts = np.random.default_rng(seed).random((n, 2))
    idx = GridIndex(w, pts)
    ids = np.concatenate([idx.bucket(c) for c in np.ndindex(*idx.ncells)])
    assert sorted(ids.tolist()) == list(range(n))
