"""
Scaling up from a pilot run
===========================

Suppose a pilot run with n accepted samples and tolerance delta was well
tuned. To cut the root mean squared error by a factor alpha, multiply n
by alpha^2 and delta by alpha^(-1/2); the expected cost grows by
alpha^((q+4)/2). A budget increase beta can be converted the same way.
"""

from abc_rates import BudgetFactor, ErrorFactor, scaling_advisor

for alpha in (2.0, 10.0):
    adv = scaling_advisor(2, ErrorFactor(alpha))
    print(f"error cut by alpha={alpha:g}: n x{adv.n_factor:g}, "
          f"delta x{adv.delta_factor:.4f}, cost x{adv.cost_factor:g}")

adv = scaling_advisor(2, BudgetFactor(8.0))
print(f"eight times the budget: n x{adv.n_factor:.3g}, delta x{adv.delta_factor:.4f}, "
      f"error x{adv.error_factor:.3g}")

# With more summary statistics the same error cut costs much more.
for q in (1, 2, 5, 10):
    print(f"q={q:>2}: halving the error costs x{scaling_advisor(q, ErrorFactor(2.0)).cost_factor:g}")
