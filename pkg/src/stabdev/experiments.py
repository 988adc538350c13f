"""Verification drivers: tail estimates, the exact Poisson oracle and conformance checks.

Theorem-level constants are existential, so nothing here can falsify the
headline deviation bounds; the conformance drivers target the fully explicit
cumulant lemmas and the qualitative trends in ``lam``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, ndtri

from ._rng import stream
from .bounds import INF, TailBoundParams, br_bound, mdp_rate_scalar, rss_cumulant_condition, rss_envelope

__all__ = [
    "REPORT_SCOPE",
    "wilson_interval",
    "TailEstimate",
    "tail_mc",
    "poisson_log_pmf",
    "poisson_log_tail",
    "poisson_log_cdf",
    "poisson_exact_tail",
    "ExactPoisson",
    "deviation_ratio_table",
    "ConformanceRow",
    "rss_conformance",
    "br_conformance",
    "AlphaSchedule",
    "MdpCheckRow",
    "mdp_check",
    "mdp_verdict",
    "saturated_rsa_fraction",
    "renyi_coverage",
    "verdict",
]

REPORT_SCOPE = (
    "Deviation-bound constants are existential: these checks test the explicit cumulant "
    "lemmas exactly and the large-lam trends qualitatively, never the theorem itself."
)

CONFIDENCE = 0.99


def wilson_interval(hits: int, n: int, confidence: float = CONFIDENCE) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("empty batch")
    z = float(ndtri(0.5 + confidence / 2.0))
    p = hits / n
    z2 = z * z
    den = 1.0 + z2 / n
    centre = (p + z2 / (2.0 * n)) / den
    half = z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / den
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class TailEstimate:
    threshold: float
    tail: str
    hits: int
    n: int
    p_hat: float
    lo: float
    hi: float


def _centered(source) -> np.ndarray:
    y = getattr(source, "centered", None)
    if y is None:
        y = np.asarray(source, dtype=float)
    return np.asarray(y, dtype=float).ravel()


def tail_mc(source, thresholds) -> list:
    """Exceedance estimates ``P(Y >= x)`` and ``P(Y <= -x)`` of the centred values.

    ``source`` is a replication batch (its centred values are used) or a
    plain array taken as already centred.
    """
    y = _centered(source)
    n = y.size
    if n == 0:
        raise ValueError("empty batch")
    srt = np.sort(y)
    out = []
    for x in thresholds:
        x = float(x)
        if not math.isfinite(x):
            raise ValueError("thresholds must be finite")
        up = int(n - np.searchsorted(srt, x, side="left"))
        down = int(np.searchsorted(srt, -x, side="right"))
        for tail, k in (("upper", up), ("lower", down)):
            lo, hi = wilson_interval(k, n)
            out.append(TailEstimate(x, tail, k, n, k / n, lo, hi))
    return out


# --- exact Poisson oracle -------------------------------------------------

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_STIRL_SMALL = np.array(
    [0.0] + [math.lgamma(j + 1.0) - (j + 0.5) * math.log(j) + j - _LOG_SQRT_2PI for j in range(1, 16)]
)


def _stirlerr(n: np.ndarray) -> np.ndarray:
    """``log(n!) - log(sqrt(2 pi n) (n/e)^n)`` for integers ``n >= 1`` (Loader)."""
    out = np.empty(n.shape)
    small = n <= 15
    out[small] = _STIRL_SMALL[n[small].astype(np.int64)]
    big = n[~small].astype(float)
    nn = big * big
    s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
    out[~small] = (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / big
    return out


def _bd0(x: np.ndarray, m: float) -> np.ndarray:
    """Deviance term ``x log(x/m) + m - x`` without cancellation (Loader)."""
    x = x.astype(float)
    out = x * np.log(x / m) + m - x
    near = np.abs(x - m) < 0.1 * (x + m)
    if np.any(near):
        xn = x[near]
        v = (xn - m) / (xn + m)
        s = (xn - m) * v
        ej = 2.0 * xn * v
        v2 = v * v
        for j in range(1, 60):
            ej = ej * v2
            s_new = s + ej / (2 * j + 1)
            if np.all(s_new == s):
                break
            s = s_new
        out[near] = s
    return out


def poisson_log_pmf(j, lam: float) -> np.ndarray:
    """``log P(N = j)`` for ``N ~ Poisson(lam)``, accurate to a few ulps of ``p``."""
    j = np.atleast_1d(np.asarray(j, dtype=np.int64))
    out = np.empty(j.shape)
    zero = j == 0
    out[zero] = -lam
    pos = ~zero
    jp = j[pos]
    out[pos] = -_stirlerr(jp) - _bd0(jp, lam) - 0.5 * np.log(2.0 * math.pi * jp)
    return out


def _log_sum(logs: np.ndarray) -> float:
    top = float(np.max(logs))
    return top + math.log(math.fsum(np.exp(logs - top).tolist()))


def _upper_sum(lam: float, m: int) -> float:
    """``log sum_{j >= m} p_j`` for ``m > lam`` (terms decrease from ``m`` on)."""
    chunk = max(64, int(10.0 * math.sqrt(lam)))
    head = float(poisson_log_pmf(m, lam)[0])
    logs = []
    start = m
    while True:
        lp = poisson_log_pmf(np.arange(start, start + chunk), lam)
        logs.append(lp)
        if lp[-1] < head - 45.0:
            break
        start += chunk
    return _log_sum(np.concatenate(logs))


def _lower_sum(lam: float, k: int) -> float:
    """``log sum_{j <= k} p_j`` for ``k < lam`` (terms decrease from ``k`` down)."""
    chunk = max(64, int(10.0 * math.sqrt(lam)))
    head = float(poisson_log_pmf(k, lam)[0])
    logs = []
    stop = k + 1
    while stop > 0:
        start = max(0, stop - chunk)
        lp = poisson_log_pmf(np.arange(start, stop), lam)
        logs.append(lp)
        if lp[0] < head - 45.0:
            break
        stop = start
    return _log_sum(np.concatenate(logs))


def _log1m_exp(a: float) -> float:
    """``log(1 - e^a)`` for ``a <= 0``."""
    if a >= 0:
        return -INF
    return math.log(-math.expm1(a)) if a > -0.693 else math.log1p(-math.exp(a))


def poisson_log_tail(lam: float, m: int) -> float:
    """``log P(N >= m)`` for ``N ~ Poisson(lam)``.

    The side of the mode that does not contain ``lam`` is summed directly
    (point probabilities in Loader's saddle-point form, until they drop by
    ``e^-45``); the other side is the complement.
    """
    if not lam > 0:
        raise ValueError("lam must be > 0")
    m = int(m)
    if m <= 0:
        return 0.0
    if m > lam:
        return _upper_sum(lam, m)
    return _log1m_exp(_lower_sum(lam, m - 1))


def poisson_log_cdf(lam: float, k: int) -> float:
    """``log P(N <= k)``; the lower tail is summed directly below the mean."""
    if not lam > 0:
        raise ValueError("lam must be > 0")
    k = int(k)
    if k < 0:
        return -INF
    if k < lam:
        return _lower_sum(lam, k)
    return _log1m_exp(_upper_sum(lam, k + 1))


def poisson_exact_tail(lam: float, m: int) -> float:
    """``P(N >= m) = 1 - sum_{j<m} e^-lam lam^j / j!``."""
    return math.exp(poisson_log_tail(lam, m))


def _ceil_tol(v: float) -> int:
    # values that are integers up to rounding count as that integer
    return int(math.ceil(v - 1e-9 * max(1.0, abs(v))))


@dataclass(frozen=True)
class ExactPoisson:
    """Law of ``Y = scale * (N - lam)`` with ``N ~ Poisson(lam)`` (``xi = c``, ``f = a``, ``scale = c a``)."""

    lam: float
    scale: float = 1.0

    @property
    def sigma(self) -> float:
        return abs(self.scale) * math.sqrt(self.lam)

    def log_upper(self, x: float) -> float:
        """``log P(Y >= x)``."""
        if self.scale == 0:
            return 0.0 if x <= 0 else -INF
        if self.scale < 0:
            return ExactPoisson(self.lam, -self.scale).log_lower(x)
        return poisson_log_tail(self.lam, _ceil_tol(self.lam + x / self.scale))

    def log_lower(self, x: float) -> float:
        """``log P(Y <= -x)``."""
        if self.scale == 0:
            return 0.0 if x <= 0 else -INF
        if self.scale < 0:
            return ExactPoisson(self.lam, -self.scale).log_upper(x)
        # P(N <= lam - x) with lam - x rounded down
        return poisson_log_cdf(self.lam, -_ceil_tol(-(self.lam - x / self.scale)))

    def cumulants(self, K: int) -> list:
        """``c_1..c_K`` of ``Y / sigma`` (standardized)."""
        return [0.0, 1.0] + [self.lam ** (1.0 - k / 2.0) * np.sign(self.scale) ** k for k in range(3, K + 1)]


def deviation_ratio_table(source, sigma: float, thresholds) -> list:
    """Rows ``P(Y >= x) / (1 - Phi(x/sigma))`` (and the lower tail) with log-ratio intervals.

    ``source`` is an :class:`ExactPoisson` law (no MC noise) or a batch /
    array of centred values (Wilson 99% intervals).
    """
    if not sigma > 0:
        raise ValueError("zero variance: sigma must be > 0")
    rows = []
    if isinstance(source, ExactPoisson):
        for x in thresholds:
            x = float(x)
            ln = float(log_ndtr(-x / sigma))
            for tail, lp in (("upper", source.log_upper(x)), ("lower", source.log_lower(x))):
                p = math.exp(lp)
                rows.append({"x": x, "tail": tail, "p": p, "lo": p, "hi": p, "normal": math.exp(ln),
                             "log_ratio": lp - ln, "log_lo": lp - ln, "log_hi": lp - ln})
        return rows
    for est in tail_mc(source, thresholds):
        ln = float(log_ndtr(-est.threshold / sigma))

        def lg(p):
            return math.log(p) - ln if p > 0 else -INF

        rows.append({"x": est.threshold, "tail": est.tail, "p": est.p_hat, "lo": est.lo, "hi": est.hi,
                     "normal": math.exp(ln), "log_ratio": lg(est.p_hat), "log_lo": lg(est.lo), "log_hi": lg(est.hi)})
    return rows


@dataclass(frozen=True)
class ConformanceRow:
    y: float
    tail: str
    value: float
    lower: float
    upper: float
    status: str  # "pass", "fail" or "out of range"

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def _std_law(law, lam: float):
    if law == "poisson":
        return ExactPoisson(float(lam))
    if law != "gaussian":
        raise ValueError(f"unknown law {law!r}")
    return None


def _std_tails(law, y: float) -> tuple:
    """``(log P(Y >= y), log P(Y <= -y))`` of the standardized variable."""
    if law is None:
        g = float(log_ndtr(-y))
        return g, g
    s = law.sigma
    return law.log_upper(y * s), law.log_lower(y * s)


def rss_conformance(
    lam: float = 100.0,
    gamma: float = 0.0,
    Delta: Optional[float] = None,
    ys: Sequence[float] = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0),
    K: int = 8,
    law: str = "poisson",
    Delta_cap: float = 1e6,
) -> tuple:
    """Check exact tail ratios of ``Y = (N - lam)/sqrt(lam)`` against the RSS band.

    ``Delta`` defaults to the largest value admitted by the exact cumulants
    ``c_3..c_K``; a supplied ``Delta`` must be admissible.  Returns
    ``(rows, params)``; rows with ``y >= Delta_gamma`` are marked out of range.
    """
    L = _std_law(law, lam)
    if L is None:
        admissible = INF
    else:
        admissible = rss_cumulant_condition(L.cumulants(K)[2:], gamma)
    if Delta is None:
        Delta = admissible
    elif Delta > admissible:
        raise ValueError(f"Delta={Delta} not admissible: exact cumulants allow at most {admissible}")
    Delta = min(Delta, Delta_cap)
    params = TailBoundParams(gamma, Delta)
    rows = []
    for y in ys:
        y = float(y)
        if y >= params.Delta_gamma:
            rows.extend(ConformanceRow(y, t, math.nan, math.nan, math.nan, "out of range") for t in ("upper", "lower"))
            continue
        env = rss_envelope(y, params)
        ln = float(log_ndtr(-y))
        for tail, lp in zip(("upper", "lower"), _std_tails(L, y)):
            ratio = math.exp(lp - ln)
            ok = env.lower <= ratio <= env.upper
            rows.append(ConformanceRow(y, tail, ratio, env.lower, env.upper, "pass" if ok else "fail"))
    return rows, params


def br_conformance(
    lam: float = 100.0,
    gamma: float = 0.0,
    H: float = 1.0,
    Delta: Optional[float] = None,
    ys: Optional[Sequence[float]] = None,
    K: int = 8,
    law: str = "poisson",
) -> tuple:
    """Check ``P(Y >= y)`` and ``P(Y <= -y)`` against the BR bound on a grid up to ``10 sigma``."""
    L = _std_law(law, lam)
    if Delta is None:
        Delta = rss_cumulant_condition(L.cumulants(K)[2:], gamma) if L is not None else 1e6
    if ys is None:
        ys = np.linspace(0.0, 10.0, 50)
    rows = []
    for y in ys:
        y = float(y)
        b = br_bound(y, gamma, H, Delta)
        for tail, lp in zip(("upper", "lower"), _std_tails(L, y)):
            p = math.exp(lp)
            rows.append(ConformanceRow(y, tail, p, 0.0, b, "pass" if p <= b else "fail"))
    return rows, Delta


# --- moderate deviations -------------------------------------------------


@dataclass(frozen=True)
class AlphaSchedule:
    """``alpha_lam = lam^eta``; the default ``eta`` is ``0.4 / (6 + 4d)``."""

    eta: Optional[float] = None
    d: int = 1

    @property
    def exponent(self) -> float:
        return 0.4 / (6.0 + 4.0 * self.d) if self.eta is None else float(self.eta)

    def __call__(self, lam: float) -> float:
        return float(lam) ** self.exponent

    def check(self, lams: Sequence[float]) -> None:
        """Numerical form of the schedule condition along ``lams``.

        ``alpha`` must increase and ``alpha * lam^(-1/(6+4d))`` must end below
        where it starts.
        """
        a = np.array([self(x) for x in lams])
        ratio = a * np.asarray(lams, dtype=float) ** (-1.0 / (6.0 + 4.0 * self.d))
        if len(a) < 2 or np.any(np.diff(a) <= 0) or not ratio[-1] < ratio[0]:
            raise ValueError(
                f"alpha schedule violates the growth condition on this grid "
                f"(exponent {self.exponent}, need 0 < eta < {1.0 / (6.0 + 4.0 * self.d)})"
            )


@dataclass(frozen=True)
class MdpCheckRow:
    lam: float
    alpha: float
    t: float
    value: float
    lo: float
    hi: float
    target: float
    target_lo: float
    target_hi: float
    flag: str = ""

    @property
    def gap(self) -> float:
        if math.isinf(self.target) and math.isinf(self.value):
            return 0.0
        return abs(self.value - self.target)


def _rate_band(t: float, Q: float, Q_se: float) -> tuple:
    target = mdp_rate_scalar(t, Q)
    lo = mdp_rate_scalar(t, Q + 3.0 * Q_se)
    hi = mdp_rate_scalar(t, max(Q - 3.0 * Q_se, 0.0))
    return target, lo, hi


def mdp_check(
    lams: Sequence[float],
    ts: Sequence[float] = (1.0,),
    schedule: Optional[AlphaSchedule | Callable] = None,
    d: int = 1,
    source=None,
    Q: Optional[float] = None,
    Q_se: float = 0.0,
    scale: float = 1.0,
    mc_floor: int = 100,
) -> list:
    """Rows ``-(1/alpha^2) log P(Y / (alpha sqrt(lam)) >= t)`` against ``t^2 / (2Q)``.

    With ``source=None`` probabilities come from the exact law of
    ``Y = scale * (N - lam)`` (constant functional times constant test
    function); then ``Q = scale^2`` unless given.  Otherwise ``source`` maps
    each ``lam`` to a batch or array of centred values and probabilities are
    Monte Carlo with Wilson intervals; cells with fewer than ``mc_floor``
    hits are flagged ``below_mc_floor``.  A zero ``Q`` expects divergence.
    """
    lams = [float(x) for x in lams]
    if schedule is None:
        schedule = AlphaSchedule(d=d)
    elif isinstance(schedule, (int, float)):
        schedule = AlphaSchedule(float(schedule), d)
    if isinstance(schedule, AlphaSchedule):
        if schedule.d != d:
            schedule = AlphaSchedule(schedule.eta, d)
        schedule.check(lams)
    if source is None and Q is None:
        Q = scale * scale
    if Q is None or Q < 0:
        raise ValueError("need Q >= 0")
    rows = []
    for lam in lams:
        alpha = float(schedule(lam))
        a2 = alpha * alpha
        law = ExactPoisson(lam, scale) if source is None else None
        y = None if source is None else _centered(source[lam])
        for t in ts:
            t = float(t)
            x = t * alpha * math.sqrt(lam)
            target, tlo, thi = _rate_band(t, Q, Q_se)
            flag = ""
            if law is not None:
                lp = law.log_upper(x)
                v = -lp / a2 + 0.0 if lp > -INF else INF
                lo = hi = v
            else:
                hits = int(np.count_nonzero(y >= x))
                n = y.size
                plo, phi = wilson_interval(hits, n)
                v = -math.log(hits / n) / a2 if hits else INF
                lo = -math.log(phi) / a2
                hi = -math.log(plo) / a2 if plo > 0 else INF
                if hits < mc_floor:
                    flag = "below_mc_floor"
            if Q == 0 and t != 0:
                flag = "divergent" if math.isinf(v) else "expected_divergence"
            rows.append(MdpCheckRow(lam, alpha, t, v, lo, hi, target, tlo, thi, flag))
    return rows


def mdp_verdict(rows: Sequence[MdpCheckRow], t: float = 1.0, tol: float = 0.05) -> dict:
    """Pass iff the largest-``lam`` row at ``t`` is within ``tol`` of its target
    and the gap decreases along ``lam``."""
    sel = sorted((r for r in rows if r.t == t), key=lambda r: r.lam)
    if not sel:
        raise ValueError(f"no rows at t={t}")
    gaps = [r.gap for r in sel]
    last = sel[-1]
    within = last.gap <= tol + max(0.0, last.hi - last.lo)
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    return {"within_tolerance": bool(within), "gap_decreasing": bool(decreasing),
            "final_gap": gaps[-1], "gaps": gaps, "pass": bool(within and decreasing)}


# --- random sequential adsorption oracles --------------------------------


def saturated_rsa_fraction(L: float, seed: int = 0, substream: int = 0) -> float:
    """Covered fraction of a ring of length ``L`` jammed with unit segments.

    Brute-force saturated sequential insertion: a uniform position among the
    admissible ones is filled until no gap of length ``>= 1`` remains.  Gaps
    evolve independently once created, so each gap is filled on its own,
    which gives the same law for the jammed state as global insertion.
    """
    if not L >= 1:
        raise ValueError("ring length must be >= 1")
    rng = stream(seed, substream)
    count = 1
    gaps = np.array([L - 1.0])
    while gaps.size:
        gaps = gaps[gaps >= 1.0]
        if not gaps.size:
            break
        count += gaps.size
        u = rng.random(gaps.size) * (gaps - 1.0)
        gaps = np.concatenate([u, gaps - 1.0 - u])
    return count / L


def renyi_coverage(T: float = math.inf) -> float:
    """Coverage at time ``T`` of 1-d RSA with unit cars and unit arrival rate.

    ``int_0^T exp(-2 int_0^u (1 - e^-v)/v dv) du``; ``T = inf`` gives the
    jamming constant.
    """
    def ein(u):
        if u < 1e-3:
            return u - u * u / 4.0 + u**3 / 18.0
        return integrate.quad(lambda v: -math.expm1(-v) / v, 0.0, u, limit=200)[0]

    def g(u):
        return math.exp(-2.0 * ein(u))

    if math.isinf(T):
        # past u = 50 the integrand is exp(-2 (log u + gamma_E)) up to e^-u terms
        head = integrate.quad(g, 0.0, 50.0, limit=400)[0]
        return head + math.exp(-2.0 * np.euler_gamma) / 50.0
    return integrate.quad(g, 0.0, T, limit=400)[0]


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def verdict(experiment: str, passed: bool, rows: int, seed: Optional[int], digest: str, **extra) -> dict:
    out = {"experiment": experiment, "pass": bool(passed), "rows": int(rows), "seed": seed,
           "config_digest": digest, "scope": REPORT_SCOPE}
    out.update(extra)
    return out
