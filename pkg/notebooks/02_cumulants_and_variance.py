"""
Cumulants and variance per volume
=================================

For xi = 1 the functional Y is a Poisson count, whose cumulants all
equal lam.  The 1-NN indicator has a variance that grows linearly in
lam; its slope is the limit the variance command reports.
"""

# %%
import math

from stabdev.cumulants import estimate_cumulants
from stabdev.functionals import FunctionalSpec
from stabdev.geometry import Window
from stabdev.statistics import ReplicationParams, estimate_Q, run_replications

torus = Window.unit(2, "torus")
batch = run_replications(ReplicationParams(FunctionalSpec.constant(1.0), torus, 50.0), 20_000)
rep = estimate_cumulants(batch, 4)
for row in rep.rows():
    print(f"k{row['order']} = {row['estimate']:8.3f}  +- {row['se']:.3f}")

# %%
nn = ReplicationParams(FunctionalSpec.nn_indicator(1 / math.sqrt(math.pi)), torus, 250.0)
q = estimate_Q(nn, [250.0, 500.0, 1000.0], 1000)
for row in q.rows:
    print(f"lam={row['lam']:6.0f}  var/lam={row['ratio']:.4f} +- {row['se']:.4f}")
print(f"extrapolated limit {q.Q:.4f} +- {q.se:.4f}, last change {q.relative_change:+.3f}")
