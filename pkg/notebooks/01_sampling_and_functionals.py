"""
Sampling Poisson clouds and scoring them
========================================

Draw a marked Poisson cloud on the unit torus, then evaluate a few
score functionals on it.  Values are per point; summing them gives the
functional Y that the rest of the package studies.
"""

# %%
import math

import numpy as np

from stabdev.functionals import FunctionalSpec, rescale_evaluate
from stabdev.geometry import IntensityDensity, MarkConfig, Window, sample_poisson

window = Window.unit(2, "torus")
lam = 400.0
cloud = sample_poisson(window, IntensityDensity(lam), MarkConfig(time=True), seed=3)
print("points:", cloud.n, "(mean", lam, ")")

# %%
# Length parameters are given in rescaled units, where the mean spacing is
# about one.  With s = 1/sqrt(pi) a disc of radius s holds one point on
# average, so the 1-NN indicator has mean 1 - 1/e.
specs = {
    "1-NN indicator": FunctionalSpec.nn_indicator(1 / math.sqrt(math.pi)),
    "RSA, r = 0.5": FunctionalSpec.rsa(0.5),
    "SIG components": FunctionalSpec.sig(),
    "Voronoi area": FunctionalSpec.voronoi("area"),
}
for name, spec in specs.items():
    v = rescale_evaluate(spec, cloud, lam).values
    print(f"{name:16s} sum={v.sum():9.3f}  mean={v.mean():.4f}")

print("1 - 1/e =", round(1 - math.exp(-1), 4))

# %%
# Voronoi cells tile the torus, so rescaled areas average to exactly 1.
area = rescale_evaluate(specs["Voronoi area"], cloud, lam).values
print("mean rescaled cell area:", np.mean(area) * cloud.n / lam)
