"""
How the best tolerance and the error scale with cost
====================================================

At each cost level we hold n * delta^2 fixed, measure the MSE on a grid
of tolerances, fit a delta^-2 + b delta^4 and read off the minimiser.
Across cost levels the optimal delta should fall like cost^(-1/6) and the
optimal MSE like cost^(-2/3). This small run takes about a minute.
"""

import numpy as np

from abc_rates import AcceptanceNorm, d_opt, rate_experiment, toy_model
from abc_rates.toy import S_STAR, IndicatorTest, posterior_interval_probability

h = IndicatorTest()
y = posterior_interval_probability(S_STAR, h)
costs = np.geomspace(300, 10_000, 4)
res = rate_experiment(toy_model(), AcceptanceNorm.identity(2), S_STAR, h, y, costs, k=150,
                      base_seed=0, d_opt=d_opt(S_STAR, h))

for level in res.levels:
    print(f"cost={level.cost:>8.0f}  best delta={level.fit.delta_star:.3f}  best MSE={level.fit.mse_star:.2e}")
print(f"delta gradient {res.delta_fit.gradient:.3f} +/- {res.delta_fit.gradient_se:.3f}  (theory -0.167)")
print(f"MSE gradient   {res.mse_fit.gradient:.3f} +/- {res.mse_fit.gradient_se:.3f}  (theory -0.667)")
