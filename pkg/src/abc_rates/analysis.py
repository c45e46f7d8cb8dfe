"""Empirical convergence-law toolkit.

Replicate loops (bias and MSE sweeps, the rate experiment, the fixed-N vs
fixed-n comparison), the curve fits they feed, and the pilot-run scaling
rules. Every replicate gets its own seed derived up front, so results never
depend on the number of worker threads.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.optimize import brentq

from .exceptions import (
    InvalidCoefficients,
    NonPositiveInput,
    PilotFailed,
    ScheduleUnderflow,
    SingularDesign,
    TooFewValidFits,
)
from .sampler import (
    AbcConfig,
    AcceptanceNorm,
    FixedAccepted,
    FixedProposals,
    ModelSpec,
    abc_rejection,
    derive_replicate_seed,
    map_replicates,
    posterior_estimate,
)

log = logging.getLogger(__name__)


def stream_seed(base_seed: int, *keys) -> int:
    """Chain ``derive_replicate_seed`` over integer or float keys."""
    seed = int(base_seed)
    for key in keys:
        if isinstance(key, float):
            key = struct.unpack("<Q", struct.pack("<d", key))[0] >> 1
        seed = derive_replicate_seed(seed, int(key))
    return seed


# --------------------------------------------------------------------------
# Replicates
# --------------------------------------------------------------------------


class Replicates(NamedTuple):
    estimates: np.ndarray
    proposals: np.ndarray
    accepted: np.ndarray


def replicate_estimates(model: ModelSpec, norm: AcceptanceNorm, s_star, h, delta: float,
                        n: int, k: int, base_seed: int, *, fixed_proposals: bool = False,
                        fallback_c: float = 0.0, threads: int = 1) -> Replicates:
    """Run ``k`` independent ABC estimates with seeds ``derive_replicate_seed(base_seed, i)``.

    With ``fixed_proposals`` the run stops after ``n`` proposals, otherwise
    after ``n`` acceptances.
    """
    mode = FixedProposals(n, fallback_c) if fixed_proposals else FixedAccepted(n)

    def one(i):
        cfg = AbcConfig(s_star, delta, mode, derive_replicate_seed(base_seed, i))
        run = abc_rejection(model, norm, cfg)
        return posterior_estimate(run, h, fallback_c), run.n_proposals, run.n_accepted

    out = map_replicates(one, range(k), threads)
    est, props, acc = zip(*out)
    return Replicates(np.array(est), np.array(props, dtype=np.int64), np.array(acc, dtype=np.int64))


@dataclass(frozen=True)
class BiasSweepRow:
    delta: float
    mean_bias: float
    std_error: float
    k: int
    n: int
    total_proposals: int = 0

    def ci95(self):
        return self.mean_bias - 1.96 * self.std_error, self.mean_bias + 1.96 * self.std_error


def _mean_se(x: np.ndarray):
    if x.size < 2:
        raise ValueError("need at least two replicates")
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def bias_sweep(model, norm, s_star, test_h, deltas: Sequence[float], n: int, k: int,
               y_exact: float, base_seed: int, threads: int = 1) -> list:
    """Mean and standard error of ``Y - y_exact`` over ``k`` fixed-n estimates, per delta."""
    if k < 2 or n < 1:
        raise ValueError("need k >= 2 and n >= 1")
    rows = []
    for delta in sorted(float(d) for d in deltas):
        reps = replicate_estimates(model, norm, s_star, test_h, delta, n, k,
                                   stream_seed(base_seed, delta), threads=threads)
        mean, se = _mean_se(reps.estimates - y_exact)
        rows.append(BiasSweepRow(delta=delta, mean_bias=mean, std_error=se, k=k, n=n,
                                total_proposals=int(reps.proposals.sum())))
    return rows


def mse_from_estimates(estimates: np.ndarray, y_exact: float):
    """``(mse, se)`` of the squared errors; se uses the sample (k-1) convention."""
    return _mean_se((np.asarray(estimates, dtype=float) - y_exact) ** 2)


def mse_point(model, norm, s_star, test_h, delta: float, n: int, k: int, y_exact: float,
              base_seed: int, threads: int = 1):
    if k < 2:
        raise ValueError("need k >= 2")
    reps = replicate_estimates(model, norm, s_star, test_h, delta, n, k, base_seed, threads=threads)
    return mse_from_estimates(reps.estimates, y_exact)


def constant_cost_schedule(deltas: Sequence[float], kappa: float, q: int) -> list:
    """Sample sizes ``round(kappa * delta^q)`` holding ``n delta^{-q}`` fixed."""
    raw = [kappa * float(d) ** q for d in deltas]
    if min(raw) < 1:
        raise ScheduleUnderflow(
            f"kappa={kappa:g} gives n < 1 at delta={min(deltas):g}; raise kappa"
        )
    return [max(1, int(round(v))) for v in raw]


# --------------------------------------------------------------------------
# Fits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MseFit:
    """``MSE(delta) = a delta^{-q} + b delta^4`` and its minimiser.

    ``valid`` is False when ``a <= 0`` or ``b <= 0``; ``delta_star`` and
    ``mse_star`` are then NaN.
    """

    q: int
    a: float
    b: float
    delta_star: float
    mse_star: float
    rss: float
    valid: bool = True

    def __call__(self, delta):
        delta = np.asarray(delta, dtype=float)
        return self.a * delta ** (-self.q) + self.b * delta**4


def optimal_delta(a: float, b: float, q: int) -> float:
    """Unique minimiser ``(q a / (4 b))^{1/(q+4)}`` of ``a delta^{-q} + b delta^4``."""
    if not (a > 0 and b > 0 and q >= 1):
        raise InvalidCoefficients(f"need a > 0, b > 0, q >= 1; got a={a!r}, b={b!r}, q={q!r}")
    return (q * a / (4.0 * b)) ** (1.0 / (q + 4))


def fit_mse_curve(points, q: int, weights: Optional[Sequence[float]] = None) -> MseFit:
    """Least squares fit of ``a delta^{-q} + b delta^4`` to ``(delta, mse)`` pairs.

    Unweighted by default; pass ``weights`` (e.g. ``1/se^2``) for weighted
    least squares.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least 3 (delta, mse) points")
    delta, mse = pts[:, 0], pts[:, 1]
    if np.any(delta <= 0):
        raise NonPositiveInput("deltas must be positive")
    X = np.column_stack([delta ** (-q), delta**4])
    sw = np.ones_like(mse) if weights is None else np.sqrt(np.asarray(weights, dtype=float))
    Xw, yw = X * sw[:, None], mse * sw
    scale = np.linalg.norm(Xw, axis=0)
    if np.unique(delta).size < 2 or np.linalg.matrix_rank(Xw / scale) < 2:
        raise SingularDesign("basis columns are collinear; need two distinct deltas")
    coef, *_ = np.linalg.lstsq(Xw / scale, yw, rcond=None)
    a, b = coef / scale
    rss = float(np.sum((mse - X @ np.array([a, b])) ** 2))
    if a > 0 and b > 0:
        ds = optimal_delta(a, b, q)
        return MseFit(q, float(a), float(b), ds, float(a * ds ** (-q) + b * ds**4), rss, True)
    return MseFit(q, float(a), float(b), math.nan, math.nan, rss, False)


@dataclass(frozen=True)
class PowerLawFit:
    """``y = A x^B`` fitted on the log-log scale; ``intercept`` is ``log A``."""

    gradient: float
    intercept: float
    gradient_se: float
    n_points: int

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.gradient


def loglog_fit(xs, ys) -> PowerLawFit:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least 3 paired points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise NonPositiveInput("log-log fit needs strictly positive data")
    res = stats.linregress(np.log(x), np.log(y))
    return PowerLawFit(float(res.slope), float(res.intercept), float(res.stderr), int(x.size))


# --------------------------------------------------------------------------
# Rate experiment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CostLevel:
    """MSE measurements along the delta grid for one nominal cost ``kappa``."""

    cost: float
    deltas: np.ndarray
    ns: np.ndarray
    mse: np.ndarray
    se: np.ndarray
    mean_proposals: np.ndarray
    fit: MseFit


@dataclass(frozen=True)
class RateExperiment:
    fits: list
    delta_fit: PowerLawFit
    mse_fit: PowerLawFit
    levels: list = field(default_factory=list)
    excluded: list = field(default_factory=list)


def pilot_center(model, norm, s_star, base_seed: int, accept_rate: float = 0.05,
                 n_pilot: int = 20_000) -> float:
    """Tolerance at which roughly ``accept_rate`` of pilot proposals are accepted."""
    run = abc_rejection(model, norm, AbcConfig(s_star, math.inf, FixedProposals(n_pilot),
                                               stream_seed(base_seed, 0xB11)))
    # accept-all run keeps every proposal's distance
    return float(np.quantile(run.distances, accept_rate))


def geometric_grid(center: float, span: float, n_grid: int) -> np.ndarray:
    return np.geomspace(center / span, center * span, n_grid)


def rate_experiment(model, norm, s_star, test_h, y_exact: float, cost_grid: Sequence[float],
                    delta_grid_per_cost=None, k: int = 300, base_seed: int = 0, *,
                    d_opt: Optional[float] = None, n_grid: int = 12, span: float = 1.5,
                    weighted: bool = False, threads: int = 1) -> RateExperiment:
    """Estimate how the optimal tolerance and the optimal MSE scale with cost.

    For each nominal cost ``kappa`` the sample size along the delta grid is
    ``round(kappa delta^q)``, the MSE is measured from ``k`` replicates per
    point and fitted with ``a delta^{-q} + b delta^4``. Power laws of the
    fitted ``delta*`` and ``MSE*`` against ``kappa`` follow.

    Unless ``delta_grid_per_cost`` gives the grids explicitly, each grid is
    geometric with ``n_grid`` points spanning ``center/span .. center*span``;
    the first centre is ``D n^{-1/4}`` if ``d_opt`` is known (else a pilot
    run at 5% acceptance), later centres are the previous level's ``delta*``.
    """
    costs = [float(c) for c in cost_grid]
    if len(costs) < 3:
        raise ValueError("need at least 3 cost levels")
    q = model.q
    if delta_grid_per_cost is None:
        if d_opt is not None:
            # delta = D n^{-1/4} with n = kappa delta^q
            center = (d_opt * costs[0] ** -0.25) ** (4.0 / (q + 4))
        else:
            center = pilot_center(model, norm, s_star, base_seed)
    levels, excluded = [], []
    for i, kappa in enumerate(costs):
        if delta_grid_per_cost is None:
            grid = geometric_grid(center, span, n_grid)
        else:
            grid = np.asarray(delta_grid_per_cost[i], dtype=float)
        ns = constant_cost_schedule(grid, kappa, q)
        mse, se, props = [], [], []
        for j, (delta, n) in enumerate(zip(grid, ns)):
            reps = replicate_estimates(model, norm, s_star, test_h, float(delta), n, k,
                                       stream_seed(base_seed, i, j), threads=threads)
            m, s = mse_from_estimates(reps.estimates, y_exact)
            mse.append(m)
            se.append(s)
            props.append(float(np.mean(reps.proposals)))
        mse, se = np.array(mse), np.array(se)
        weights = 1.0 / np.maximum(se, 1e-300) ** 2 if weighted else None
        fit = fit_mse_curve(np.column_stack([grid, mse]), q, weights)
        level = CostLevel(kappa, grid, np.array(ns), mse, se, np.array(props), fit)
        levels.append(level)
        if fit.valid:
            center = fit.delta_star
        else:
            log.warning("cost level %g: fit has a=%g, b=%g; excluded", kappa, fit.a, fit.b)
            excluded.append(kappa)
    delta_fit, mse_fit = rate_fits([lv.cost for lv in levels], [lv.fit for lv in levels])
    return RateExperiment([lv.fit for lv in levels], delta_fit, mse_fit, levels, excluded)


def rate_fits(costs: Sequence[float], fits: Sequence[MseFit]):
    """Power laws of ``delta*`` and ``MSE*`` against cost over the valid fits."""
    good = [(c, f) for c, f in zip(costs, fits) if f.valid]
    if len(good) < 3:
        raise TooFewValidFits(f"only {len(good)} cost levels gave a valid fit")
    c = [c for c, _ in good]
    return (loglog_fit(c, [f.delta_star for _, f in good]),
            loglog_fit(c, [f.mse_star for _, f in good]))


# --------------------------------------------------------------------------
# Tolerance schedules delta_n = D n^{-r}
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SchedulePoint:
    n: int
    delta: float
    mse: float
    se: float
    mean_cost: float


def schedule_mse(model, norm, s_star, test_h, y_exact: float, ns: Sequence[int],
                 delta_of_n: Callable[[int], float], k: int, base_seed: int,
                 threads: int = 1) -> list:
    """MSE and mean proposal count of fixed-n estimates along a tolerance schedule."""
    out = []
    for n in ns:
        delta = float(delta_of_n(n))
        reps = replicate_estimates(model, norm, s_star, test_h, delta, int(n), k,
                                   stream_seed(base_seed, int(n), delta), threads=threads)
        m, s = mse_from_estimates(reps.estimates, y_exact)
        out.append(SchedulePoint(int(n), delta, m, s, float(np.mean(reps.proposals))))
    return out


def n_for_cost(cost: float, delta_of_n: Callable[[float], float],
               acceptance_probability: Callable[[float], float]) -> int:
    """Sample size whose expected proposal count ``n / p(delta_n)`` equals ``cost``."""
    f = lambda ln: ln - math.log(acceptance_probability(delta_of_n(math.exp(ln)))) - math.log(cost)
    return max(1, int(round(math.exp(brentq(f, 0.0, math.log(cost))))))


@dataclass(frozen=True)
class ScheduleComparison:
    exponents: list
    points: dict
    fits: dict


def compare_schedules(model, norm, s_star, test_h, y_exact: float, cost_grid: Sequence[float],
                      exponents: Sequence[float], d_anchor: float,
                      acceptance_probability: Callable[[float], float], k: int,
                      base_seed: int, threads: int = 1) -> ScheduleComparison:
    """MSE-vs-cost exponents of schedules ``delta_n ~ n^{-r}`` on a shared cost grid.

    All schedules pass through the point ``(n_0, D n_0^{-1/4})`` whose
    expected cost is the smallest on the grid, so they start from the same
    tolerance and diverge as the budget grows. Costs are mean proposal counts.
    """
    costs = sorted(float(c) for c in cost_grid)
    anchor_rule = lambda n: d_anchor * n**-0.25
    n0 = n_for_cost(costs[0], anchor_rule, acceptance_probability)
    delta0 = anchor_rule(n0)
    points, fits = {}, {}
    for r in exponents:
        D = delta0 * n0**r
        rule = lambda n, D=D, r=r: D * n ** (-r)
        ns = [n_for_cost(c, rule, acceptance_probability) for c in costs]
        pts = schedule_mse(model, norm, s_star, test_h, y_exact, ns, rule, k,
                           stream_seed(base_seed, float(r)), threads)
        points[r] = pts
        fits[r] = loglog_fit([p.mean_cost for p in pts], [p.mse for p in pts])
    return ScheduleComparison(list(exponents), points, fits)


# --------------------------------------------------------------------------
# Fixed number of proposals vs fixed number of acceptances
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeComparison:
    delta: float
    p_delta: float
    n_hat: int
    n: int
    mse_fixed_proposals: float
    se_fixed_proposals: float
    mse_fixed_accepted: float
    se_fixed_accepted: float
    ratio: float
    total_proposals: int = 0


def compare_fixed_modes(model, norm, s_star, test_h, y_exact: float, delta: float, n_target: float,
                        k: int, fallback_c: float, base_seed: int, *,
                        p_delta: Optional[float] = None, n_pilot: int = 100_000,
                        threads: int = 1) -> ModeComparison:
    """MSE of the fixed-proposal estimator with ``N_hat = round(n_target / p)`` against
    the fixed-n estimator with ``n = floor(N_hat p)``.

    Replicate ``i`` of both estimators uses the same seed (common random
    numbers); each MSE estimate is still unbiased for its own estimator.
    Without an oracle ``p_delta`` a fixed-proposal pilot run estimates it.
    """
    if k < 100:
        raise ValueError("need k >= 100")
    if p_delta is None:
        run = abc_rejection(model, norm, AbcConfig(s_star, delta, FixedProposals(n_pilot),
                                                   stream_seed(base_seed, 0x9170)))
        if run.n_accepted == 0:
            raise PilotFailed(f"pilot of {n_pilot} proposals accepted nothing at delta={delta:g}")
        p_delta = run.n_accepted / run.n_proposals
    n_hat = max(1, int(round(n_target / p_delta)))
    n = max(1, int(math.floor(n_hat * p_delta)))
    seed = stream_seed(base_seed, delta)
    fixed_p = replicate_estimates(model, norm, s_star, test_h, delta, n_hat, k, seed,
                                  fixed_proposals=True, fallback_c=fallback_c, threads=threads)
    fixed_n = replicate_estimates(model, norm, s_star, test_h, delta, n, k, seed, threads=threads)
    mp, sp = mse_from_estimates(fixed_p.estimates, y_exact)
    mn, sn = mse_from_estimates(fixed_n.estimates, y_exact)
    if mn == 0.0:
        ratio = 1.0 if mp == 0.0 else math.inf
    else:
        ratio = mp / mn
    total = int(fixed_p.proposals.sum() + fixed_n.proposals.sum())
    return ModeComparison(delta, float(p_delta), n_hat, n, mp, sp, mn, sn, ratio, total)


def fixed_mode_mse_ratio(model, norm, s_star, test_h, y_exact: float, delta: float,
                         n_target: float, k: int, fallback_c: float, base_seed: int,
                         **kwargs) -> float:
    return compare_fixed_modes(model, norm, s_star, test_h, y_exact, delta, n_target, k,
                               fallback_c, base_seed, **kwargs).ratio


# --------------------------------------------------------------------------
# Pilot-run scaling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorFactor:
    """Reduce the root mean squared error by ``alpha``."""

    alpha: float


@dataclass(frozen=True)
class BudgetFactor:
    """Increase the expected running time by ``beta``."""

    beta: float


@dataclass(frozen=True)
class ScalingAdvice:
    n_factor: float
    delta_factor: float
    cost_factor: float
    error_factor: float


def scaling_advisor(q: int, target: Union[ErrorFactor, BudgetFactor]) -> ScalingAdvice:
    """Multipliers for ``n``, ``delta``, cost and RMSE relative to a pilot run."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if isinstance(target, ErrorFactor):
        alpha = float(target.alpha)
        if not alpha > 0:
            raise ValueError("alpha must be > 0")
        n_factor = alpha**2
        return ScalingAdvice(n_factor, n_factor**-0.25, alpha ** ((q + 4) / 2), 1.0 / alpha)
    if isinstance(target, BudgetFactor):
        beta = float(target.beta)
        if not beta > 0:
            raise ValueError("beta must be > 0")
        n_factor = beta ** (4.0 / (q + 4))
        return ScalingAdvice(n_factor, n_factor**-0.25, beta, beta ** (-2.0 / (q + 4)))
    raise TypeError(f"unknown target {target!r}")
