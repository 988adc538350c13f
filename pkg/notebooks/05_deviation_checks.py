"""
Tail probabilities and moderate deviations
==========================================

Monte Carlo tails come with Wilson intervals; exact Poisson tails give a
noise-free view of the moderate-deviation limit, whose approach to the
Gaussian rate is slow.
"""

# %%
from stabdev.experiments import AlphaSchedule, ExactPoisson, deviation_ratio_table, mdp_check, mdp_verdict, tail_mc
from stabdev.functionals import FunctionalSpec
from stabdev.geometry import Window
from stabdev.statistics import ReplicationParams, run_replications

batch = run_replications(ReplicationParams(FunctionalSpec.constant(1.0), Window.unit(2, "torus"), 40.0), 5000)
for e in tail_mc(batch, [0, 10, 20]):
    if e.tail == "upper":
        print(f"P(Y - mean >= {e.threshold:2g}) = {e.p_hat:.4f}  [{e.lo:.4f}, {e.hi:.4f}]")

# %%
exact = ExactPoisson(400.0)
for r in deviation_ratio_table(exact, exact.sigma, [exact.sigma * z for z in (1, 2, 3)]):
    if r["tail"] == "upper":
        print(f"x/sigma={r['x'] / exact.sigma:.0f}  log ratio to the normal tail {r['log_ratio']:+.3f}")

# %%
rows = mdp_check([1e2, 1e3, 1e4, 1e6, 1e8], [1.0], AlphaSchedule(0.05, 1), 1)
for r in rows:
    print(f"lam={r.lam:9.0e}  value={r.value:.3f}  target={r.target}")
print(mdp_verdict(rows[:3]))
