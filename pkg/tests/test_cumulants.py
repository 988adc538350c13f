from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from stabdev.cumulants import (
    estimate_cumulants,
    kstatistics,
    moments_to_cumulants,
    plugin_cumulants,
    set_partitions,
)

BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975]


def touchard_moments(mu, order):
    """Poisson raw moments sum_k S(n,k) mu^k with Stirling numbers from their recursion."""
    S = [[Fraction(0)] * (order + 1) for _ in range(order + 1)]
    S[0][0] = Fraction(1)
    for n in range(1, order + 1):
        for k in range(1, n + 1):
            S[n][k] = k * S[n - 1][k] + S[n - 1][k - 1]
    return [sum(S[n][k] * mu**k for k in range(1, n + 1)) for n in range(1, order + 1)]


def cumulants_to_moments(c):
    """m_n = sum_{k<n} C(n-1, k) c_{k+1} m_{n-1-k}, m_0 = 1."""
    m = [Fraction(1)]
    for n in range(1, len(c) + 1):
        m.append(sum(comb(n - 1, k) * c[k] * m[n - 1 - k] for k in range(n)))
    return m[1:]


@pytest.mark.parametrize("n", range(1, 9))
def test_set_partition_count_is_bell(n):
    assert sum(1 for _ in set_partitions(n)) == BELL[n]


def test_single_moment():
    assert moments_to_cumulants([Fraction(7, 3)]) == [Fraction(7, 3)]


@pytest.mark.parametrize("mu", [Fraction(1), Fraction(5, 2), Fraction(50), Fraction(1, 7)])
def test_poisson_touchard_moments_give_constant_cumulants(mu):
    assert moments_to_cumulants(touchard_moments(mu, 5)) == [mu] * 5


def test_gaussian_moments():
    c = moments_to_cumulants([0, 1, 0, 3])
    assert c == [0, 1, 0, 0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.fractions(min_value=-5, max_value=5, max_denominator=50), min_size=1, max_size=8))
def test_round_trip_with_inverse_recursion(c):
    assert moments_to_cumulants(cumulants_to_moments(c)) == c


def test_order_cap():
    with pytest.raises(ValueError, match="partition order cap"):
        moments_to_cumulants([1] * 11)


def test_kstatistics_match_scipy():
    y = np.random.default_rng(0).gamma(2.0, size=500)
    k = kstatistics(y, 4)
    ref = [stats.kstat(y, n) for n in range(1, 5)]
    assert np.allclose(k, ref, rtol=1e-9)


def test_constant_sample_higher_cumulants_zero():
    y = np.full(1000, 3.25)
    for variant in ("k-statistics", "plug-in"):
        rep = estimate_cumulants(y, 4, variant)
        assert rep.estimate(1) == 3.25
        assert [rep.estimate(k) for k in (2, 3, 4)] == [0.0, 0.0, 0.0]


def test_poisson_sample_cumulants_within_3se():
    y = np.random.default_rng(7).poisson(50.0, 100_000).astype(float)
    rep = estimate_cumulants(y, 3)
    for k in (2, 3):
        assert abs(rep.estimate(k) - 50.0) <= 3 * rep.stderr(k)


def test_permutation_invariance_bit_identical():
    rng = np.random.default_rng(1)
    y = rng.normal(size=2000)
    a = kstatistics(y, 6)
    b = kstatistics(rng.permutation(y), 6)
    assert a.tobytes() == b.tobytes()
    assert plugin_cumulants(y, 8).tobytes() == plugin_cumulants(y[::-1], 8).tobytes()


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    a=st.floats(0.1, 10.0) | st.floats(-10.0, -0.1),
    b=st.floats(-100.0, 100.0),
)
def test_plugin_shift_scale_equivariance(seed, a, b):
    y = np.random.default_rng(seed).exponential(size=400)
    base = plugin_cumulants(y, 6)
    moved = plugin_cumulants(a * y + b, 6)
    assert moved[0] == pytest.approx(a * base[0] + b, rel=1e-9, abs=1e-9 * abs(b))
    for k in range(2, 7):
        assert moved[k - 1] == pytest.approx(a**k * base[k - 1], rel=1e-9, abs=1e-12 * abs(a) ** k)


def test_report_rows_and_errors():
    y = np.arange(100.0)
    rep = estimate_cumulants(y, 4)
    assert [r["order"] for r in rep.rows()] == [1, 2, 3, 4]
    with pytest.raises(ValueError):
        estimate_cumulants(y, 9)
    with pytest.raises(ValueError):
        estimate_cumulants(y[:3], 4)
    with pytest.raises(ValueError):
        estimate_cumulants(y, 2, "other")
