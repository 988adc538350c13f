"""Moment/cumulant algebra and cumulant estimators.

Set partitions are enumerated as restricted-growth strings and aggregated by
their block-size signature.  All coefficient tables are exact rationals, so
:func:`moments_to_cumulants` is exact when fed ``int`` or ``Fraction`` input.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "MAX_PARTITION_ORDER",
    "set_partitions",
    "moments_to_cumulants",
    "kstatistics",
    "plugin_cumulants",
    "estimate_cumulants",
    "CumulantReport",
]

MAX_PARTITION_ORDER = 10
JACKKNIFE_BLOCKS = 50
MAX_ORDER = {"k-statistics": 6, "plug-in": 8}


def set_partitions(n: int):
    """Yield every set partition of ``{0..n-1}`` as a restricted-growth string."""
    if n == 0:
        yield ()
        return
    a = [0] * n
    # b[i] = 1 + max(a[:i])
    def rec(i, m):
        if i == n:
            yield tuple(a)
            return
        for v in range(m + 1):
            a[i] = v
            yield from rec(i + 1, max(m, v + 1) if v == m else m)

    # first element always opens block 0
    yield from rec(1, 1)


def _blocks(rgs) -> list:
    out: dict = {}
    for i, b in enumerate(rgs):
        out.setdefault(b, []).append(i)
    return list(out.values())


@lru_cache(maxsize=None)
def _partition_signatures(n: int) -> tuple:
    """``((count, block sizes), ...)`` over all set partitions of ``n`` items."""
    counts: Counter = Counter()
    for rgs in set_partitions(n):
        sizes = tuple(sorted(Counter(rgs).values(), reverse=True))
        counts[sizes] += 1
    return tuple((c, sizes) for sizes, c in sorted(counts.items(), key=lambda kv: (len(kv[0]), kv[0])))


def _moebius(p: int) -> int:
    return (-1) ** (p - 1) * math.factorial(p - 1)


def moments_to_cumulants(moments) -> list:
    """Cumulants ``c_1..c_l`` from raw moments ``m_1..m_l``.

    ``c_l = sum over set partitions {L_1..L_p} of (-1)^(p-1) (p-1)! prod m_|L_i|``.
    Arithmetic follows the input type, so ``Fraction`` input stays exact.
    """
    m = list(moments)
    l = len(m)
    if l < 1:
        raise ValueError("need at least one moment")
    if l > MAX_PARTITION_ORDER:
        raise ValueError(f"partition order cap: order {l} exceeds {MAX_PARTITION_ORDER}")
    out = []
    for r in range(1, l + 1):
        total = 0
        for count, sizes in _partition_signatures(r):
            term = count * _moebius(len(sizes))
            for s in sizes:
                term = term * m[s - 1]
            total = total + term
        out.append(total)
    return out


@lru_cache(maxsize=None)
def _kstat_table(r: int) -> tuple:
    """Power-sum expansion of the order-``r`` k-statistic.

    Returns ``((coef, p, power indices), ...)`` meaning
    ``k_r = sum coef / n_(p) * prod S_j`` with ``n_(p)`` the falling factorial.
    A product of raw moments ``prod mu'_{a_i}`` over ``p`` factors has the
    unbiased estimator ``n_(p)^-1 sum over distinct indices prod y^{a_i}``,
    which expands over set partitions of the ``p`` factors with Moebius
    weights.
    """
    acc: Counter = Counter()
    for count, sizes in _partition_signatures(r):
        outer = count * _moebius(len(sizes))
        p = len(sizes)
        for rgs in set_partitions(p):
            blocks = _blocks(rgs)
            inner = 1
            powers = []
            for blk in blocks:
                inner *= _moebius(len(blk))
                powers.append(sum(sizes[j] for j in blk))
            acc[(p, tuple(sorted(powers)))] += outer * inner
    return tuple((Fraction(c), p, pw) for (p, pw), c in sorted(acc.items()) if c != 0)


def _falling(n, p):
    out = 1
    for i in range(p):
        out *= n - i
    return out


def _kstats_from_sums(S: np.ndarray, n, K: int, shift: float) -> np.ndarray:
    """k-statistics 1..K from power sums ``S[j] = sum (y - shift)^j`` (``S[0] = n``)."""
    out = np.empty(K)
    for r in range(1, K + 1):
        total = 0.0
        for coef, p, powers in _kstat_table(r):
            term = float(coef) / _falling(n, p)
            for j in powers:
                term = term * S[j]
            total += term
        out[r - 1] = total
    out[0] += shift
    return out


def _plugin_from_sums(S: np.ndarray, n, K: int, shift: float) -> np.ndarray:
    raw = [S[j] / n for j in range(1, K + 1)]
    c = np.array(moments_to_cumulants(raw), dtype=float)
    c[0] += shift
    return c


def _power_sums(y: np.ndarray, K: int) -> np.ndarray:
    S = np.empty(K + 1)
    S[0] = y.size
    p = np.ones_like(y)
    for j in range(1, K + 1):
        p = p * y
        S[j] = np.sum(p)
    return S


def _centre(y: np.ndarray) -> float:
    # sorted summation makes every statistic invariant under batch permutation
    return float(np.sum(np.sort(y))) / y.size


def kstatistics(y, K: int) -> np.ndarray:
    """Unbiased cumulant estimators ``k_1..k_K`` (Fisher's k-statistics)."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size <= K:
        raise ValueError(f"need more than K={K} observations, got {y.size}")
    c = _centre(y)
    z = np.sort(y) - c
    return _kstats_from_sums(_power_sums(z, K), y.size, K, c)


def plugin_cumulants(y, K: int) -> np.ndarray:
    """Cumulants of the empirical distribution (partition formula on sample moments)."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size <= K:
        raise ValueError(f"need more than K={K} observations, got {y.size}")
    c = _centre(y)
    z = np.sort(y) - c
    return _plugin_from_sums(_power_sums(z, K), y.size, K, c)


@dataclass
class CumulantReport:
    """Estimated cumulants ``c_1..c_K`` with jackknife standard errors."""

    order: int
    estimates: np.ndarray
    se: np.ndarray
    variant: str
    n: int
    blocks: int = JACKKNIFE_BLOCKS
    flags: list = field(default_factory=list)

    def estimate(self, k: int) -> float:
        return float(self.estimates[k - 1])

    def stderr(self, k: int) -> float:
        return float(self.se[k - 1])

    def rows(self) -> list:
        return [
            {"order": k, "estimate": float(self.estimates[k - 1]), "se": float(self.se[k - 1]), "variant": self.variant}
            for k in range(1, self.order + 1)
        ]

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "blocks": self.blocks, "flags": self.flags, "cumulants": self.rows()}, indent=2)


def estimate_cumulants(values, K: int, variant: str = "k-statistics", blocks: int = JACKKNIFE_BLOCKS) -> CumulantReport:
    """Cumulant estimates through order ``K`` with delete-a-group jackknife SEs.

    ``values`` is a 1-d sample or anything with a ``values`` attribute (a
    replication batch).  Groups are contiguous runs of the sample in its
    given order.
    """
    y = np.asarray(getattr(values, "values", values), dtype=float).ravel()
    if variant not in MAX_ORDER:
        raise ValueError(f"unknown cumulant variant {variant!r}")
    if K < 1 or K > MAX_ORDER[variant]:
        raise ValueError(f"order K={K} outside 1..{MAX_ORDER[variant]} for {variant}")
    n = y.size
    if n <= K:
        raise ValueError(f"need n > K (n={n}, K={K})")
    fn = _kstats_from_sums if variant == "k-statistics" else _plugin_from_sums
    c = _centre(y)
    est = fn(_power_sums(np.sort(y) - c, K), n, K, c)

    g = min(blocks, n)
    z = y - c
    parts = np.array_split(np.arange(n), g)
    block_sums = np.array([_power_sums(z[idx], K) for idx in parts])
    total = block_sums.sum(axis=0)
    flags = []
    if n - max(len(p) for p in parts) <= K:
        se = np.full(K, np.inf)
        flags.append("jackknife_undefined")
    else:
        loo = np.array([fn(total - bs, n - bs[0], K, c) for bs in block_sums])
        h = n / np.array([bs[0] for bs in block_sums])
        # weighted delete-m_j jackknife (Busing et al.), reduces to the usual form for equal groups
        pseudo = h[:, None] * est[None, :] - (h[:, None] - 1) * loo
        var = np.sum((pseudo - est[None, :]) ** 2 / (h[:, None] - 1), axis=0) / g
        se = np.sqrt(np.maximum(var, 0.0))
    if variant == "k-statistics" and K >= 2 and est[1] < 0:
        flags.append("negative_variance_estimate")
    return CumulantReport(order=K, estimates=est, se=se, variant=variant, n=n, blocks=g, flags=flags)
