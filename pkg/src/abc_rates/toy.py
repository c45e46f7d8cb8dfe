"""Gaussian toy problem with closed-form oracles.

Prior ``theta ~ N(0, 1)``, data ``X_1, X_2 | theta ~ N(theta, 1)`` i.i.d.,
summary ``S(x) = x``. Then ``S ~ N(0, [[2, 1], [1, 2]])`` and
``theta | S = s ~ N((s_1 + s_2) / 3, 1 / 3)``, so every quantity the error
analysis needs can be evaluated without sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .exceptions import DegenerateCurvature
from .quadrature import disk_integral
from .sampler import ModelSpec

S_STAR = (1.0, 1.0)
SIGMA = np.array([[2.0, 1.0], [1.0, 2.0]])
POSTERIOR_SD = math.sqrt(1.0 / 3.0)
Q = 2


def _prior_sample(rng, size):
    return rng.standard_normal((size, 1))


def _simulate(theta, rng):
    return theta + rng.standard_normal((theta.shape[0], 2))


def _summary(x):
    return x


def toy_model() -> ModelSpec:
    """The toy problem as a pluggable model (p=1, d=2, q=2)."""
    return ModelSpec(p=1, d=2, q=2, prior_sample=_prior_sample, simulate=_simulate,
                     summary=_summary, name="toy")


@dataclass(frozen=True)
class IndicatorTest:
    """Test function ``h(theta) = 1{lo <= theta_1 <= hi}``."""

    lo: float = -0.5
    hi: float = 0.5

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    def __call__(self, theta):
        t = np.asarray(theta, dtype=float)
        if t.ndim == 2:
            t = t[:, 0]
        return ((t >= self.lo) & (t <= self.hi)).astype(float)


@dataclass(frozen=True)
class ConstantTest:
    """``h(theta) = value``; used for degenerate sanity checks."""

    value: float = 1.0

    def __call__(self, theta):
        t = np.asarray(theta, dtype=float)
        n = t.shape[0] if t.ndim >= 1 else 1
        return np.full(n, float(self.value))


@dataclass(frozen=True)
class BallMoments:
    """Mean, variance and probability of ``h(theta)`` given ``S`` in the ball."""

    delta: float
    y_delta: float
    sigma2_delta: float
    p_delta: float


def std_normal_cdf(x):
    """Standard normal CDF; scalar in, float out, arrays vectorised."""
    out = ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def posterior_mean(s):
    s = np.asarray(s, dtype=float)
    return (s[..., 0] + s[..., 1]) / 3.0


def posterior_interval_probability(s, test: IndicatorTest = IndicatorTest()):
    """``P(lo <= theta <= hi | S = s)``, vectorised over the last axis of ``s``."""
    mu = posterior_mean(s)
    out = ndtr((test.hi - mu) / POSTERIOR_SD) - ndtr((test.lo - mu) / POSTERIOR_SD)
    return float(out) if np.ndim(out) == 0 else out


def prior_interval_probability(test: IndicatorTest = IndicatorTest()) -> float:
    return float(ndtr(test.hi) - ndtr(test.lo))


def f_S(s):
    """Marginal density of the summary, ``N(0, [[2, 1], [1, 2]])``."""
    s = np.asarray(s, dtype=float)
    s1, s2 = s[..., 0], s[..., 1]
    out = np.exp(-(s1 * s1 - s1 * s2 + s2 * s2) / 3.0) / (2.0 * math.pi * math.sqrt(3.0))
    return float(out) if np.ndim(out) == 0 else out


def phi_h(s, test: IndicatorTest = IndicatorTest()):
    return f_S(s) * posterior_interval_probability(s, test)


def posterior_variance(s_star=S_STAR, test: IndicatorTest = IndicatorTest()) -> float:
    """``Var(h(theta) | S = s_star)``, Bernoulli since ``h`` is an indicator."""
    y = posterior_interval_probability(s_star, test)
    return y * (1.0 - y)


def ball_moments(s_star=S_STAR, delta: float = 0.1, test: IndicatorTest = IndicatorTest(),
                 rtol: float = 1e-9) -> BallMoments:
    """Moments of ``h(theta)`` conditional on ``S`` landing in ``B(s_star, delta)``."""
    if not delta > 0:
        raise ValueError("delta must be > 0")

    def integrand(pts):
        dens = f_S(pts)
        return np.stack([dens, dens * posterior_interval_probability(pts, test)], axis=1)

    mass, mass_h = disk_integral(integrand, s_star, delta, rtol=rtol)
    y = float(mass_h / mass)
    return BallMoments(delta=float(delta), y_delta=y, sigma2_delta=y * (1.0 - y),
                       p_delta=float(mass))


def _laplacian(func, s, step):
    s = np.asarray(s, dtype=float)
    total = 0.0
    centre = func(s)
    for i in range(s.size):
        e = np.zeros_like(s)
        e[i] = step
        total += (func(s + e) - 2.0 * centre + func(s - e)) / step**2
    return total


def bias_constant(s_star=S_STAR, test: IndicatorTest = IndicatorTest(), fd_step: float = 1e-2) -> float:
    """Leading coefficient of the bias in ``delta^2``, Laplacians by central differences."""
    if not 1e-4 <= fd_step <= 1e-1:
        raise ValueError("fd_step must lie in [1e-4, 1e-1]")
    s = np.asarray(s_star, dtype=float)
    lap_h = _laplacian(lambda u: phi_h(u, test), s, fd_step)
    lap_1 = _laplacian(f_S, s, fd_step)
    phi1 = f_S(s)
    y = phi_h(s, test) / phi1
    return (lap_h - y * lap_1) / (2.0 * (Q + 2) * phi1)


def d_opt_formula(variance: float, c: float, q: int = Q) -> float:
    """Optimal constant ``D`` in the schedule ``delta_n = D n^{-1/4}``."""
    if abs(c) <= 1e-10:
        raise DegenerateCurvature(f"bias constant {c:g} is numerically zero")
    return (q * variance / (4.0 * c * c)) ** 0.25


def d_opt(s_star=S_STAR, test: IndicatorTest = IndicatorTest(), fd_step: float = 1e-2) -> float:
    return d_opt_formula(posterior_variance(s_star, test), bias_constant(s_star, test, fd_step))
