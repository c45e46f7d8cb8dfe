"""
Rejection sampling on the Gaussian toy model
============================================

A parameter theta ~ N(0, 1) generates two observations X_i ~ N(theta, 1).
We observe s* = (1, 1) and ask for P(-1/2 <= theta <= 1/2 | data).
The exact answer is known, so we can watch the sampler approach it.
"""

import numpy as np

from abc_rates import AbcConfig, AcceptanceNorm, FixedAccepted, FixedProposals, abc_rejection, toy_model
from abc_rates.toy import S_STAR, IndicatorTest, posterior_interval_probability

model = toy_model()
norm = AcceptanceNorm.identity(2)
h = IndicatorTest(-0.5, 0.5)
print("exact posterior probability:", round(posterior_interval_probability(S_STAR, h), 4))

# Keep drawing until 2000 proposals have landed within delta of s*.
for delta in (1.0, 0.5, 0.2):
    run = abc_rejection(model, norm, AbcConfig(S_STAR, delta, FixedAccepted(2000), seed=1))
    est = h(run.accepted).mean()
    print(f"delta={delta:<4} estimate={est:.4f}  proposals={run.n_proposals:>7}  "
          f"acceptance rate={run.n_accepted / run.n_proposals:.4f}")

# Smaller tolerances cost more per accepted sample but shrink the bias.
# A fixed proposal budget instead gives a random number of acceptances.
run = abc_rejection(model, norm, AbcConfig(S_STAR, 0.5, FixedProposals(100_000), seed=2))
print("fixed budget of 100000 proposals accepted", run.n_accepted)

# An infinite tolerance accepts everything: these are prior draws.
prior = abc_rejection(model, norm, AbcConfig(S_STAR, np.inf, FixedAccepted(5), seed=3))
print("prior draws:", np.round(prior.accepted.ravel(), 3))
