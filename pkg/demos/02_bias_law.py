"""
Bias grows like delta squared
=============================

For small tolerances the ABC estimate is off by roughly C * delta^2.
Here C is computed from the exact toy-model densities, then compared
with exact ball averages and with a Monte Carlo bias sweep.
"""

from abc_rates import AcceptanceNorm, bias_sweep, toy_model
from abc_rates.toy import S_STAR, IndicatorTest, ball_moments, bias_constant, posterior_interval_probability

h = IndicatorTest()
y = posterior_interval_probability(S_STAR, h)
C = bias_constant(S_STAR, h)
print(f"C(s*) = {C:.4f}")

# Exact bias from quadrature over the acceptance disc.
print("delta   exact bias   C delta^2")
for delta in (0.1, 0.3, 0.6, 1.0, 1.5):
    exact = ball_moments(S_STAR, delta, h).y_delta - y
    print(f"{delta:<7} {exact:.6f}     {C * delta**2:.6f}")

# The same from simulation: 1000 estimates of n = 200 accepted samples each.
rows = bias_sweep(toy_model(), AcceptanceNorm.identity(2), S_STAR, h, [0.5, 1.0], n=200, k=1000,
                  y_exact=y, base_seed=0)
for r in rows:
    lo, hi = r.ci95()
    print(f"delta={r.delta}: simulated bias {r.mean_bias:.4f}, 95% interval [{lo:.4f}, {hi:.4f}]")
