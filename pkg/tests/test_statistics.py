import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from stabdev.functionals import FunctionalSpec, sig_functional
from stabdev.geometry import IntensityDensity, PointCloud, Window, sample_poisson
from stabdev.statistics import (
    ReplicationParams,
    TestFunction,
    _variance_ratio,
    cumulant_growth_check,
    estimate_Q,
    estimate_V,
    integral_Q,
    integrate,
    run_replications,
)

S_UNIT = 1.0 / math.sqrt(math.pi)  # lam * pi * s^2 = 1 in rescaled units
TORUS2 = Window.unit(2, "torus")


def _params(spec=None, lam=50.0, f=None, window=TORUS2, seed=0):
    return ReplicationParams(spec or FunctionalSpec.constant(1.0), window, lam, f=f or TestFunction.constant(1.0), seed=seed)


# --- integrate ---------------------------------------------------------------


def test_integrate_constant_is_point_count():
    c = sample_poisson(TORUS2, IntensityDensity(40.0), seed=1)
    assert integrate(TestFunction.constant(1.0), c, np.ones(c.n)) == c.n


def test_integrate_empty_box_is_zero():
    c = sample_poisson(TORUS2, IntensityDensity(40.0), seed=1)
    f = TestFunction.box([0.3, 0.3], [0.3, 0.9])
    assert integrate(f, c, np.ones(c.n)) == 0.0


def test_integrate_sig_reciprocal_counts_components():
    c = sample_poisson(TORUS2, IntensityDensity(300.0), seed=4)
    total = integrate(TestFunction.constant(1.0), c, sig_functional(c))
    assert abs(total - round(total)) < 1e-9 and round(total) >= 1


def test_integrate_misaligned_values():
    c = sample_poisson(TORUS2, IntensityDensity(40.0), seed=1)
    with pytest.raises(ValueError, match="misaligned"):
        integrate(TestFunction.constant(), c, np.ones(c.n + 1))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_integrate_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    c = PointCloud(rng.random((60, 2)), TORUS2)
    v = rng.normal(size=60)
    f = TestFunction("grid", table=rng.normal(size=(4, 4)))
    g = TestFunction("tabulated", table=rng.normal(size=(3, 5)))
    lhs = float(np.dot(a * f(c.points, TORUS2) + b * g(c.points, TORUS2), v))
    rhs = a * integrate(f, c, v) + b * integrate(g, c, v)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * (1 + np.abs(v).sum() * 5 * (abs(a) + abs(b))))


# --- replications --------------------------------------------------------------


def test_poisson_mean():
    b = run_replications(_params(), 4000)
    assert abs(b.mean - 50.0) < 3 * math.sqrt(50.0 / b.n)


def test_minimal_batch():
    b = run_replications(_params(), 2)
    assert b.n == 2 and math.isfinite(b.mean_se)
    with pytest.raises(ValueError):
        run_replications(_params(), 1)


def test_determinism_and_thread_independence():
    p = _params(FunctionalSpec.nn_indicator(S_UNIT), 200.0)
    a = run_replications(p, 64, threads=1)
    b = run_replications(p, 64, threads=1)
    c = run_replications(p, 64, threads=5)
    assert a.values.tobytes() == b.values.tobytes() == c.values.tobytes()
    assert a.counts.tobytes() == c.counts.tobytes()
    d = run_replications(_params(FunctionalSpec.nn_indicator(S_UNIT), 200.0, seed=1), 64)
    assert d.values.tobytes() != a.values.tobytes()


def test_constant_variance_ratio_chi_square_coverage():
    n, lam = 400, 60.0
    q = stats.chi2.ppf([0.005, 0.995], n - 1)
    for run in range(20):
        b = run_replications(_params(lam=lam, seed=1000 + run), n)
        s2 = np.var(b.values, ddof=1)
        lo, hi = (n - 1) * s2 / q[1] / lam, (n - 1) * s2 / q[0] / lam
        assert lo <= 1.0 <= hi


# --- limits ----------------------------------------------------------------


def test_Q_for_poisson_is_one():
    q = estimate_Q(_params(), [25.0, 50.0, 100.0], 3000)
    for row in q.rows:
        assert abs(row["ratio"] - 1.0) <= 3 * row["se"]
    assert abs(q.Q - 1.0) <= 3 * q.se


def test_Q_zero_for_zero_test_function():
    q = estimate_Q(_params(f=TestFunction.constant(0.0)), [25.0, 50.0, 100.0], 100)
    assert q.Q == 0.0 and q.se == 0.0


def test_Q_grid_validation():
    with pytest.raises(ValueError):
        estimate_Q(_params(), [10.0, 20.0], 10)
    with pytest.raises(ValueError):
        estimate_Q(_params(), [10.0, 30.0, 20.0], 10)


def test_nn_variance_ratio_stabilizes():
    q = estimate_Q(_params(FunctionalSpec.nn_indicator(S_UNIT)), [250.0, 500.0, 1000.0], 2000)
    assert abs(q.relative_change) < 0.1 + 3 * q.relative_change_se


@pytest.mark.parametrize("tau", [1.0, 10.0])
def test_V_for_poisson_is_one(tau):
    v = estimate_V(FunctionalSpec.constant(1.0), tau, 2, 1500, seed=3)
    assert abs(v.V - 1.0) <= 3 * v.se


def test_V_scales_with_c_squared():
    v = estimate_V(FunctionalSpec.constant(2.5), 1.0, 2, 1500, seed=4)
    assert abs(v.V - 6.25) <= 3 * v.se


def test_V_integral_matches_direct_Q_for_nn():
    spec = FunctionalSpec.nn_indicator(S_UNIT)
    v = estimate_V(spec, 1.0, 2, 2000, seed=5)
    q = estimate_Q(_params(spec, seed=6), [250.0, 500.0, 1000.0], 2000)
    Qi = integral_Q(TestFunction.constant(1.0), TORUS2, IntensityDensity(1.0), [0.5, 2.0], [v.V, v.V])
    assert abs(Qi - q.Q) <= 3 * math.hypot(v.se, q.se)


def test_variance_ratio_matches_direct_jackknife():
    from stabdev.statistics import jackknife_se

    b = run_replications(_params(lam=20.0), 300)
    est, se = _variance_ratio(b)
    ref = jackknife_se(b.values, lambda a: np.var(a, ddof=1) / 20.0)
    assert est == pytest.approx(ref[0], rel=1e-12)
    assert se == pytest.approx(ref[1], rel=1e-8)


# --- cumulant growth -------------------------------------------------------


def test_growth_poisson_ratios_near_one():
    rep = cumulant_growth_check(_params(), [50.0, 100.0], 4, 4000)
    for r in rep.rows:
        assert abs(r["ratio"] - 1.0) <= 3 * r["ratio_se"] + 1e-12
    assert rep.envelope_A >= 1.0 and rep.envelope_B >= 1.0


def test_growth_required_A_monotone_in_K():
    p = _params(lam=30.0)
    A = [cumulant_growth_check(p, [30.0, 60.0], K, 2000).required_A for K in (2, 3, 4, 5)]
    assert all(a <= b for a, b in zip(A, A[1:]))


def test_growth_rsa_volume_order():
    p = ReplicationParams(FunctionalSpec.rsa(0.5), Window.unit(1, "torus"), 250.0)
    rep = cumulant_growth_check(p, [250.0, 500.0, 1000.0], 4, 2000)
    assert rep.flags == []
