"""
One-dimensional parking
=======================

Random sequential adsorption on a ring: the covered fraction at unit time
follows the Renyi coverage curve, and with enough arrivals it reaches the
jamming constant, which the saturated insertion oracle reproduces.
"""

# %%
import numpy as np

from stabdev.experiments import renyi_coverage, saturated_rsa_fraction
from stabdev.functionals import FunctionalSpec, rescale_evaluate
from stabdev.geometry import IntensityDensity, MarkConfig, Window, sample_poisson

ring = Window.unit(1, "torus")
lam = 1e4
for diameter in (1.0, 4.0, 20.0):
    frac = []
    for s in range(4):
        c = sample_poisson(ring, IntensityDensity(lam), MarkConfig(time=True), seed=4, substream=s + 1)
        frac.append(rescale_evaluate(FunctionalSpec.rsa(diameter / 2), c, lam).values.sum() * diameter / lam)
    print(f"diameter {diameter:4g}: simulated {np.mean(frac):.4f}  coverage curve {renyi_coverage(diameter):.4f}")

# %%
oracle = np.mean([saturated_rsa_fraction(lam, seed=0, substream=s) for s in range(10)])
print("saturated oracle", round(oracle, 4), " jamming constant", round(renyi_coverage(), 7))
