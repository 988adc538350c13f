"""
Explicit tail bounds against exact Poisson tails
================================================

The cumulant-based envelopes are fully explicit, so a standardized Poisson
count makes an exact test case.  Every grid point inside the admissible
range must fall within the band.
"""

# %%
import math

import numpy as np

from stabdev.bounds import TailBoundParams, br_bound, rss_cumulant_condition
from stabdev.experiments import ExactPoisson, br_conformance, rss_conformance

for lam in (25.0, 100.0, 400.0):
    D = math.sqrt(lam)
    p = TailBoundParams(0.0, D)
    ys = np.linspace(0, p.Delta_gamma, 6, endpoint=False)
    rows, _ = rss_conformance(lam, 0.0, D, ys)
    worst = max(max(r.value / r.upper, r.lower / r.value) for r in rows)
    print(f"lam={lam:5.0f}  Delta_gamma={p.Delta_gamma:.3f}  pass={all(r.passed for r in rows)}  "
          f"largest edge ratio {worst:.3f} (below 1 means inside)")

# %%
c = ExactPoisson(100.0).cumulants(8)[2:]
print("Delta from cumulant condition:", rss_cumulant_condition(c))
rows, D = br_conformance(100.0, 0.0, 1.0)
print("BR rows passing:", sum(r.passed for r in rows), "of", len(rows))
print("BR bound at y = 2, 5:", br_bound(np.array([2.0, 5.0]), 0.0, 1.0, D))
