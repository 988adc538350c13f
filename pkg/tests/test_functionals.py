import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from stabdev.functionals import (
    FunctionalSpec,
    Phi,
    UnionFind,
    birth_growth_accept,
    evaluate,
    knn_edge_functional,
    knn_edges,
    rescale_evaluate,
    rsa_accept,
    sig_edges,
    sig_functional,
    voronoi_cell_functional,
)
from stabdev.geometry import IntensityDensity, MarkConfig, PointCloud, Window, distance, sample_poisson


def _cloud(n, d=2, topo="torus", seed=0, times=False, radii=None):
    rng = np.random.default_rng(seed)
    w = Window.unit(d, topo)
    pts = rng.random((n, d))
    marks = MarkConfig(time=times, radius=radii is not None, r_max=radii or 0.0)
    t = rng.permutation(n) / max(n, 1) + 0.5 / max(n, 1) if times else None
    rad = rng.random(n) * radii if radii is not None else None
    return PointCloud(pts, w, times=t, radii=rad, marks=marks)


def _dmat(cloud):
    p = cloud.points
    return np.array([[distance(cloud.window, a, b) for b in p] for a in p])


# --- brute-force oracles -------------------------------------------------


def brute_knn(cloud, k):
    D = _dmat(cloud)
    np.fill_diagonal(D, np.inf)
    return {(i, int(j)) for i in range(cloud.n) for j in np.argsort(D[i], kind="stable")[:k]}


def brute_sig(cloud):
    D = _dmat(cloud)
    np.fill_diagonal(D, np.inf)
    r = D.min(axis=1)
    n = cloud.n
    return {(i, j) for i in range(n) for j in range(i + 1, n) if D[i, j] <= r[i] + r[j]}


def brute_rsa(cloud, r):
    order = np.argsort(cloud.times)
    acc = np.zeros(cloud.n, dtype=bool)
    for i in order:
        acc[i] = all(distance(cloud.window, cloud.points[i], cloud.points[j]) >= 2 * r for j in np.flatnonzero(acc))
    return acc


# --- constant and rescaling ----------------------------------------------


def test_constant_family_all_ones():
    c = _cloud(50)
    for lam in (1.0, 7.5, 1000.0):
        assert np.all(rescale_evaluate(FunctionalSpec.constant(1.0), c, lam).values == 1.0)


def test_lam_one_is_identity():
    c = _cloud(80, seed=3)
    spec = FunctionalSpec.nn_indicator(0.05)
    assert np.array_equal(rescale_evaluate(spec, c, 1.0).values, evaluate(spec, c))


def test_knn_rescaling_matches_scaled_threshold():
    s, lam = 0.6, 400.0
    for seed in range(100):
        c = sample_poisson(Window.unit(2, "torus"), IntensityDensity(lam), seed=seed)
        a = rescale_evaluate(FunctionalSpec.nn_indicator(s), c, lam).values
        b = evaluate(FunctionalSpec.nn_indicator(s / math.sqrt(lam)), c)
        assert np.array_equal(a, b)


def test_unknown_family_rejected():
    with pytest.raises(ValueError, match="unknown functional family"):
        FunctionalSpec("nope")


# --- packing ---------------------------------------------------------------


def test_rsa_single_point_accepted():
    c = PointCloud([[0.5, 0.5]], Window.unit(2), times=[0.3], marks=MarkConfig(time=True))
    assert rsa_accept(c, 0.1).tolist() == [True]


def test_rsa_overlap_rejects_later():
    r = 0.1
    c = PointCloud([[0.2, 0.5], [0.2 + 1.5 * r, 0.5]], Window.unit(2), times=[0.1, 0.2], marks=MarkConfig(time=True))
    assert rsa_accept(c, r).tolist() == [True, False]


@pytest.mark.parametrize("d,topo", [(1, "torus"), (2, "box"), (2, "torus"), (3, "torus")])
def test_rsa_matches_brute_force(d, topo):
    for seed in range(20):
        c = _cloud(60, d, topo, seed, times=True)
        assert np.array_equal(rsa_accept(c, 0.08), brute_rsa(c, 0.08))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 50))
def test_rsa_removing_rejected_point_keeps_earlier(seed, n):
    c = _cloud(n, 2, "torus", seed, times=True)
    acc = rsa_accept(c, 0.1)
    for i in np.flatnonzero(~acc):
        keep = np.delete(np.arange(n), i)
        sub = rsa_accept(c.subset(keep), 0.1)
        earlier = c.times[keep] < c.times[i]
        assert np.array_equal(sub[earlier], acc[keep][earlier])


def test_birth_growth_v0_equals_rsa():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        pts = rng.random((80, 2))
        t = rng.permutation(80) / 80 + 0.001
        r = 0.04
        m = MarkConfig(time=True, radius=True, r_max=r)
        c = PointCloud(pts, Window.unit(2, "torus"), times=t, radii=np.full(80, r), marks=m)
        assert np.array_equal(birth_growth_accept(c, 0.0, 1.0), rsa_accept(c, r))


def test_birth_growth_single_and_coincident():
    m = MarkConfig(time=True, radius=True, r_max=0.0)
    one = PointCloud([[0.5, 0.5]], Window.unit(2), times=[0.5], radii=[0.0], marks=m)
    assert birth_growth_accept(one, 1.0, 0.5).tolist() == [True]
    two = PointCloud([[0.5, 0.5], [0.5, 0.5]], Window.unit(2), times=[0.2, 0.6], radii=[0.0, 0.0], marks=m)
    assert birth_growth_accept(two, 1.0, 0.5).tolist() == [True, False]


# --- graphs ----------------------------------------------------------------


def test_knn_phi_one_out_degree():
    c = _cloud(100, seed=1)
    assert np.all(knn_edge_functional(c, 1, Phi.constant(1.0), "out") == 1.0)


def test_undirected_dominates_out():
    phi = Phi.indicator(0.08)
    for seed in range(20):
        c = _cloud(120, seed=seed)
        assert np.all(knn_edge_functional(c, 2, phi, "undirected") >= knn_edge_functional(c, 2, phi, "out"))


@pytest.mark.parametrize("k", [1, 3])
@pytest.mark.parametrize("topo", ["box", "torus"])
def test_knn_matches_brute_force(k, topo):
    for seed in range(5):
        c = _cloud(300, 2, topo, seed)
        src, dst, _ = knn_edges(c, k, "out")
        assert set(zip(src.tolist(), dst.tolist())) == brute_knn(c, k)


def test_sig_two_points():
    c = PointCloud([[0.2, 0.2], [0.4, 0.3]], Window.unit(2))
    v = sig_functional(c)
    assert v.tolist() == [0.5, 0.5] and v.sum() == 1.0


@pytest.mark.parametrize("topo", ["box", "torus"])
def test_sig_matches_brute_force(topo):
    for seed in range(5):
        c = _cloud(300 if seed == 0 else 200, 2, topo, seed)
        i, j, _, _ = sig_edges(c)
        assert set(zip(i.tolist(), j.tolist())) == brute_sig(c)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 150), d=st.integers(1, 3))
def test_sig_reciprocal_sum_is_component_count(seed, n, d):
    c = _cloud(n, d, "torus", seed)
    v = sig_functional(c)
    i, j, _, _ = sig_edges(c)
    g = coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
    ncomp = connected_components(g, directed=False)[0]
    assert math.isclose(v.sum(), ncomp, abs_tol=1e-9)
    assert round(v.sum()) == ncomp


def test_union_find_against_scipy():
    rng = np.random.default_rng(0)
    n = 200
    e = rng.integers(0, n, (150, 2))
    uf = UnionFind(n)
    for a, b in e:
        uf.union(int(a), int(b))
    ref = connected_components(coo_matrix((np.ones(150), (e[:, 0], e[:, 1])), shape=(n, n)), directed=False)[0]
    assert len(np.unique(uf.labels())) == ref


def test_small_knn_needs_enough_points():
    with pytest.raises(ValueError, match="insufficient points"):
        knn_edge_functional(_cloud(2), 2, Phi.constant(1.0))


# --- voronoi ----------------------------------------------------------------


@pytest.mark.parametrize("topo", ["box", "torus"])
def test_voronoi_areas_partition_window(topo):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        w = Window((1.0, 2.0), topo)
        c = PointCloud(rng.random((200, 2)) * [1.0, 2.0], w)
        assert abs(voronoi_cell_functional(c, "area").sum() - 2.0) < 1e-9


def test_voronoi_square_on_torus():
    pts = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]
    a = voronoi_cell_functional(PointCloud(pts, Window.unit(2, "torus")), "area")
    assert np.allclose(a, 0.25, atol=1e-12)


def test_voronoi_needs_three_points():
    with pytest.raises(ValueError):
        voronoi_cell_functional(PointCloud([[0.5, 0.5]], Window.unit(2)), "area")


def test_voronoi_cap_and_statistics():
    c = _cloud(100, 2, "box", 4)
    assert voronoi_cell_functional(c, "area", cap=0.005).max() <= 0.005
    assert np.all(voronoi_cell_functional(c, "vertex_count") >= 3)
    assert np.all(voronoi_cell_functional(c, "perimeter") > 0)


# --- invariants -------------------------------------------------------------

SPECS = [
    FunctionalSpec.rsa(0.3),
    FunctionalSpec.birth_growth(1.0, 0.5),
    FunctionalSpec.nn_indicator(0.56),
    FunctionalSpec.knn(2, Phi.indicator(1.0), "undirected"),
    FunctionalSpec.sig(),
    FunctionalSpec.sig("edge_stat", Phi.indicator(1.0)),
    FunctionalSpec.voronoi("area", cap=3.0),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family + "-" + str(s.params.get("variant", s.params.get("k", ""))))
def test_values_bounded_over_1e5_evaluations(spec):
    d = 2
    w = Window.unit(d, "torus")
    marks = MarkConfig(time=spec.needs_times, radius=spec.needs_radii, r_max=0.2 if spec.needs_radii else 0.0)
    total, s = 0, 0
    while total < 100_000:
        c = sample_poisson(w, IntensityDensity(2000.0), marks, seed=9, substream=s)
        s += 1
        v = rescale_evaluate(spec, c, 2000.0).values
        assert np.all(np.abs(v) <= spec.c_xi(d) + 1e-12)
        total += v.size


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family)
def test_translation_invariance_on_torus(spec):
    w = Window.unit(2, "torus")
    marks = MarkConfig(time=spec.needs_times, radius=spec.needs_radii, r_max=0.2 if spec.needs_radii else 0.0)
    c = sample_poisson(w, IntensityDensity(150.0), marks, seed=2)
    base = rescale_evaluate(spec, c, 150.0).values
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = rescale_evaluate(spec, c.shifted(rng.random(2)), 150.0).values
        assert np.allclose(v, base, rtol=0, atol=1e-9)


# --- 1-d packing against the parking-problem coverage ------------------------------


@pytest.mark.parametrize("diameter,lam,reps", [(1.0, 1e4, 10), (60.0, 3e4, 5)])
def test_rsa_ring_coverage_matches_renyi(diameter, lam, reps):
    # arrival density one per unit length over unit time: coverage theta(diameter)
    from stabdev.experiments import renyi_coverage

    w = Window.unit(1, "torus")
    frac = []
    for s in range(reps):
        c = sample_poisson(w, IntensityDensity(lam), MarkConfig(time=True), seed=12, substream=s + 1)
        acc = rescale_evaluate(FunctionalSpec.rsa(diameter / 2), c, lam).values
        frac.append(acc.sum() * diameter / lam)
    assert abs(np.mean(frac) - renyi_coverage(diameter)) < 0.005
