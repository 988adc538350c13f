"""Closed-form evaluators for the deviation inequalities and rate functions.

The unknown theorem constants (``C1..C6``) are plain arguments with default
1; these functions report the shape of the bounds and never claim they hold
for a particular functional.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import log_ndtr, ndtr

__all__ = [
    "INF",
    "NormalTail",
    "phi_tail",
    "mills_envelope",
    "theorem1_rhs",
    "theorem1_range",
    "theorem1_part2_rhs",
    "TailBoundParams",
    "RSSEnvelope",
    "rss_envelope",
    "rss_cumulant_condition",
    "br_bound",
    "mdp_rate_scalar",
    "mdp_rate_measure",
]

# the division convention a/0 = +inf is semantic, so +inf is returned as a value
INF = math.inf
_LOG_MAX = math.log(sys.float_info.max)


class NormalTail(NamedTuple):
    cdf: float
    sf: float
    log_cdf: float
    log_sf: float


def phi_tail(y: float) -> NormalTail:
    """Standard normal ``Phi(y)`` and ``1 - Phi(y)``, plus their logarithms.

    The logs stay finite where the probabilities underflow double precision
    (``1 - Phi(40)`` is about ``1e-349``).
    """
    y = float(y)
    return NormalTail(float(ndtr(y)), float(ndtr(-y)), float(log_ndtr(y)), float(log_ndtr(-y)))


def mills_envelope(y: float) -> tuple:
    """``(1/(2 + sqrt(2 pi) y), e^{y^2/2}(1 - Phi(y)), 1/2)`` for ``y >= 0``."""
    mid = math.exp(0.5 * y * y + float(log_ndtr(-y)))
    return 1.0 / (2.0 + math.sqrt(2.0 * math.pi) * y), mid, 0.5


def theorem1_rhs(x, lam: float, d: int, C2: float = 1.0):
    """``C2 (lam^(-1/(6+4d)) + x^3 lam^(-(10+6d)/(6+4d)))``."""
    x = np.asarray(x, dtype=float)
    D = 6.0 + 4.0 * d
    out = C2 * (lam ** (-1.0 / D) + x**3 * lam ** (-(10.0 + 6.0 * d) / D))
    return float(out) if out.ndim == 0 else out


def theorem1_range(lam: float, d: int, C1: float = 1.0) -> float:
    """Upper end ``C1 lam^((4+2d)/(6+4d))`` of the admissible ``x`` range."""
    return C1 * lam ** ((4.0 + 2.0 * d) / (6.0 + 4.0 * d))


def theorem1_part2_rhs(x, lam: float, d: int, sigma2: float, C4: float = 1.0, C5: float = 1.0, C6: float = 1.0):
    """``exp(-min{C4 x^2/sigma^2, C5 x^(1/(2+d)), C6 (x^3/lam)^(1/(3+d))})``."""
    if not sigma2 > 0:
        raise ValueError("sigma^2 must be > 0")
    x = np.asarray(x, dtype=float)
    a = C4 * x**2 / sigma2
    b = C5 * x ** (1.0 / (2.0 + d))
    c = C6 * (x**3 / lam) ** (1.0 / (3.0 + d))
    out = np.exp(-np.minimum(np.minimum(a, b), c))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TailBoundParams:
    """``(gamma, Delta, H)``; ``Delta_gamma`` is derived on access."""

    gamma: float
    Delta: float
    H: float = 1.0

    def __post_init__(self):
        if self.gamma < 0 or not self.Delta > 0 or not self.H > 0:
            raise ValueError("need gamma >= 0, Delta > 0, H > 0")

    @property
    def Delta_gamma(self) -> float:
        return (math.sqrt(2.0) / 6.0 * self.Delta) ** (1.0 / (1.0 + 2.0 * self.gamma)) / 6.0


class RSSEnvelope(NamedTuple):
    L_bound: float
    psi: float
    lower: float
    upper: float


def rss_envelope(y: float, params: TailBoundParams) -> RSSEnvelope:
    """Admissible interval for ``P(Y >= y) / (1 - Phi(y))`` on ``0 <= y < Delta_gamma``.

    With ``|L| <= |y|^3 / (3 Delta_gamma)`` and ``theta`` in ``[-1, 1]`` the
    ratio ``exp(L) (1 + theta psi(y) (y+1)/Delta_gamma)`` ranges over
    ``[lower, upper]``.
    """
    Dg = params.Delta_gamma
    if y < 0 or y >= Dg:
        raise ValueError(f"outside RSS range: need 0 <= y < Delta_gamma = {Dg:.6g}")
    L = abs(y) ** 3 / (3.0 * Dg)
    q = 1.0 - y / Dg
    # exp(-large) underflows cleanly; Dg^2 may overflow for huge Delta
    with np.errstate(over="ignore"):
        psi = 60.0 * (1.0 + 10.0 * Dg * Dg * math.exp(-q * math.sqrt(Dg))) / q
    b = psi * (y + 1.0) / Dg
    lo_factor = 1.0 - b
    eL = math.exp(L) if L < 700.0 else INF
    lower = min(math.exp(-L) * lo_factor, eL * lo_factor)
    upper = eL * (1.0 + b)
    return RSSEnvelope(L, psi, lower, upper)


def rss_cumulant_condition(cumulants: Sequence[float], gamma: float = 0.0) -> float:
    """Largest ``Delta`` with ``|c_k| <= (k!)^(1+gamma) / Delta^(k-2)`` for ``k = 3..K``.

    ``cumulants`` lists ``c_3, c_4, ..., c_K`` of a standardized variable.
    Returns ``inf`` when every ``c_k`` vanishes.  The result is nudged down by
    ulps if rounding would break the inequality, so feeding it back always
    satisfies the condition.
    """
    c = [abs(float(x)) for x in cumulants]
    if not c:
        raise ValueError("need at least c_3")
    best = INF
    for k, ck in enumerate(c, start=3):
        if ck == 0.0:
            continue
        logD = ((1.0 + gamma) * math.lgamma(k + 1) - math.log(ck)) / (k - 2)
        # beyond double range the largest finite Delta is still admissible
        best = min(best, math.exp(logD) if logD < _LOG_MAX else sys.float_info.max)
    if math.isinf(best):
        return best
    while not _rss_holds(c, gamma, best):
        best = math.nextafter(best, 0.0)
    return best


def _rss_holds(c, gamma, Delta) -> bool:
    for k, ck in enumerate(c, start=3):
        if ck > math.exp((1.0 + gamma) * math.lgamma(k + 1) - (k - 2) * math.log(Delta)):
            return False
    return True


def br_bound(y, gamma: float, H: float, Delta: float):
    """``exp(-1/4 min{y^2 / H, (Delta y)^(1/(1+gamma))})`` for ``y >= 0``."""
    if not H > 0 or not Delta > 0:
        raise ValueError("need H > 0 and Delta > 0")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("need y >= 0")
    with np.errstate(over="ignore"):
        out = np.exp(-0.25 * np.minimum(y * y / H, (Delta * y) ** (1.0 / (1.0 + gamma))))
    return float(out) if out.ndim == 0 else out


def mdp_rate_scalar(t: float, Q: float) -> float:
    """``t^2 / (2Q)`` with ``0/0 = 0`` and ``a/0 = +inf``."""
    if Q < 0:
        raise ValueError("Q must be >= 0")
    num = t * t
    if Q == 0:
        return 0.0 if num == 0 else INF
    return num / (2.0 * Q)


def mdp_rate_measure(rho, reference, weights) -> float:
    """``1/2 sum rho_i^2 ref_i w_i`` where ``ref = V(kappa) kappa`` on quadrature nodes.

    ``rho`` is the density of the measure with respect to ``ref dx``; it is
    ``+inf`` if ``rho`` charges a node where the reference vanishes.
    """
    rho = np.asarray(rho, dtype=float)
    ref = np.asarray(reference, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(ref < 0) or np.any(w < 0):
        raise ValueError("reference and weights must be >= 0")
    if np.any((ref == 0) & (rho != 0) & (w > 0)):
        return INF
    return 0.5 * float(np.sum(rho * rho * ref * w))
