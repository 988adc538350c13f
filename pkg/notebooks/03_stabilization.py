"""
Radii of stabilization and two-point clustering
===============================================

A score is stabilizing when nothing outside a ball around the point can
change it.  We estimate that radius by probing, fit the exponential decay
of its tail, and look at how quickly the scores at two points decorrelate.
"""

# %%
import math

import numpy as np

from stabdev.functionals import FunctionalSpec
from stabdev.geometry import Window
from stabdev.stabilization import ProbeConfig, collect_radii, fit_decay, pair_correlation_decay

lam = 500.0
spec = FunctionalSpec.nn_indicator(1 / math.sqrt(math.pi))
sample = collect_radii(spec, Window.unit(2, "torus"), lam, 300, seed=1, cfg=ProbeConfig(r0=0.0005))
fit = fit_decay(sample)
print("decay rate alpha_hat:", round(fit.alpha_hat, 3))
print("censored radii:", int(sample.censored.sum()))

# %%
s = 1 / math.sqrt(math.pi * lam)  # threshold in original units
mult = np.array([0.5, 1, 2, 4, 8])
tab = pair_correlation_decay(spec, lam, mult * s, 400, seed=2)
for m, d, e in zip(mult, tab.diff, tab.se):
    print(f"delta = {m:3g} s   |diff| = {d:.4f}  se = {e:.4f}")
