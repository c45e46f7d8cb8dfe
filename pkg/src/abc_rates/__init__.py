"""Rejection ABC sampling, a Gaussian toy model with exact answers, and
experiments measuring how bias, MSE and the best tolerance scale with cost."""

__version__ = "0.1.0"

from .exceptions import AbcError
from .sampler import (
    AbcConfig,
    AbcRun,
    AcceptanceNorm,
    CostModel,
    FixedAccepted,
    FixedProposals,
    ModelSpec,
    abc_rejection,
    derive_replicate_seed,
    posterior_estimate,
    run_cost,
    whitening_transform,
)
from .toy import IndicatorTest, ConstantTest, ball_moments, bias_constant, d_opt, toy_model
from .analysis import (
    BudgetFactor,
    ErrorFactor,
    bias_sweep,
    compare_fixed_modes,
    compare_schedules,
    fit_mse_curve,
    fixed_mode_mse_ratio,
    loglog_fit,
    mse_point,
    optimal_delta,
    rate_experiment,
    scaling_advisor,
)
