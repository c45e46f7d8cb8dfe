"""Basic ABC rejection sampling over a pluggable generative model.

Proposals are drawn in fixed-size blocks from a per-run generator, so the
proposal stream for a given seed is the same regardless of stopping mode or
tolerance. Within a block every proposal is tested, and the run is cut at
the exact proposal where the stopping rule fires; the result is identical to
looping over the same stream one proposal at a time.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar, Union

import numpy as np

from .exceptions import NonSymmetric, NotPositiveDefinite, ProposalCapExceeded

BLOCK_SIZE = 4096
DEFAULT_MAX_PROPOSALS = 10**8

_MASK64 = (1 << 64) - 1
_GOLDEN64 = 0x9E3779B97F4A7C15

T = TypeVar("T")


# --------------------------------------------------------------------------
# Model plug-in boundary
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """A generative model given by three vectorised procedures.

    ``prior_sample(rng, size)`` returns ``(size, p)`` parameter draws,
    ``simulate(theta, rng)`` maps ``(size, p)`` parameters to ``(size, d)``
    data, and ``summary(x)`` maps ``(size, d)`` data to ``(size, q)``
    summaries. ``summary`` must be deterministic.
    """

    p: int
    d: int
    q: int
    prior_sample: Callable[[np.random.Generator, int], np.ndarray]
    simulate: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    summary: Callable[[np.ndarray], np.ndarray]
    name: str = "model"

    def __post_init__(self):
        for dim in ("p", "d", "q"):
            if int(getattr(self, dim)) < 1:
                raise ValueError(f"{dim} must be a positive integer")

    def propose(self, rng: np.random.Generator, size: int):
        """Draw ``size`` proposals, returning ``(theta, summaries)``."""
        theta = np.asarray(self.prior_sample(rng, size), dtype=float).reshape(size, -1)
        x = np.asarray(self.simulate(theta, rng), dtype=float).reshape(size, -1)
        s = np.asarray(self.summary(x), dtype=float).reshape(size, -1)
        if theta.shape[1] != self.p or x.shape[1] != self.d or s.shape[1] != self.q:
            raise ValueError(
                f"model {self.name!r} produced shapes {theta.shape}, {x.shape}, "
                f"{s.shape}; declared p={self.p}, d={self.d}, q={self.q}"
            )
        return theta, s


def transform_summary(model: ModelSpec, W: np.ndarray) -> ModelSpec:
    """Return a copy of ``model`` whose summary is ``x -> W @ S(x)``."""
    W = np.asarray(W, dtype=float)
    inner = model.summary

    def summary(x):
        return np.asarray(inner(x), dtype=float) @ W.T

    return ModelSpec(
        p=model.p,
        d=model.d,
        q=W.shape[0],
        prior_sample=model.prior_sample,
        simulate=model.simulate,
        summary=summary,
        name=f"{model.name}[whitened]",
    )


# --------------------------------------------------------------------------
# Acceptance norm
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AcceptanceNorm:
    """The norm ``||s||_A^2 = s^T A^{-1} s`` with ``W = A^{-1/2}`` precomputed."""

    A: np.ndarray
    W: np.ndarray

    @classmethod
    def identity(cls, q: int) -> "AcceptanceNorm":
        eye = np.eye(q)
        eye.flags.writeable = False
        return cls(A=eye, W=eye)

    @property
    def q(self) -> int:
        return self.W.shape[0]

    def distance(self, diff: np.ndarray) -> np.ndarray:
        """Whitened Euclidean length of each row of ``diff``."""
        diff = np.atleast_2d(diff)
        return np.sqrt(np.einsum("ij,ij->i", diff @ self.W, diff @ self.W))


def whitening_transform(A, sym_tol: float = 1e-12) -> AcceptanceNorm:
    """Build the acceptance norm for a symmetric positive-definite ``A``.

    ``W`` is the symmetric inverse square root, from the eigendecomposition
    ``A = V diag(lam) V^T`` as ``W = V diag(lam^{-1/2}) V^T``.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if not np.all(np.abs(A - A.T) <= sym_tol):
        raise NonSymmetric(f"max asymmetry {np.max(np.abs(A - A.T)):.3g} exceeds {sym_tol}")
    A = 0.5 * (A + A.T)
    lam, V = np.linalg.eigh(A)
    if lam.max() <= 0 or lam.min() <= 1e-12 * lam.max():
        raise NotPositiveDefinite(f"eigenvalues {lam}")
    W = (V * lam**-0.5) @ V.T
    W = 0.5 * (W + W.T)
    A.flags.writeable = False
    W.flags.writeable = False
    return AcceptanceNorm(A=A, W=W)


# --------------------------------------------------------------------------
# Configuration and results
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedAccepted:
    """Stop after ``n`` acceptances; the proposal count is random."""

    n: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class FixedProposals:
    """Stop after ``n_hat`` proposals; the acceptance count is random.

    ``fallback_c`` is the estimate reported when nothing is accepted.
    """

    n_hat: int
    fallback_c: float = 0.0

    def __post_init__(self):
        if int(self.n_hat) < 1:
            raise ValueError("n_hat must be >= 1")


StoppingMode = Union[FixedAccepted, FixedProposals]


@dataclass(frozen=True, eq=False)
class AbcConfig:
    s_star: np.ndarray
    delta: float
    mode: StoppingMode
    seed: int
    max_proposals: int = DEFAULT_MAX_PROPOSALS

    def __post_init__(self):
        s = np.array(self.s_star, dtype=float).ravel()
        s.flags.writeable = False
        object.__setattr__(self, "s_star", s)
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.max_proposals) < 1:
            raise ValueError("max_proposals must be >= 1")


@dataclass(frozen=True, eq=False)
class AbcRun:
    """Output of one ABC run.

    ``distances`` holds the whitened distance of every accepted proposal to
    ``s_star``; all of them are ``<= delta``.
    """

    accepted: np.ndarray
    distances: np.ndarray
    n_accepted: int
    n_proposals: int
    delta: float
    seed: int


@dataclass(frozen=True)
class CostModel:
    """Cost of one run is ``a + b * n_proposals``."""

    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.a < 0 or not self.b > 0:
            raise ValueError("need a >= 0 and b > 0")


# --------------------------------------------------------------------------
# Randomness
# --------------------------------------------------------------------------


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_replicate_seed(base_seed: int, replicate_index: int) -> int:
    """Seed for replicate ``replicate_index`` of a run seeded with ``base_seed``.

    SplitMix64 finaliser applied to ``base + (index + 1) * golden``; both
    steps are bijections on 64-bit words, so distinct indices under one
    base seed never collide.
    """
    if replicate_index < 0:
        raise ValueError("replicate_index must be nonnegative")
    z = (int(base_seed) + (int(replicate_index) + 1) * _GOLDEN64) & _MASK64
    return _mix64(z)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def map_replicates(fn: Callable[[T], object], items: Sequence[T], threads: int = 1) -> list:
    """Apply ``fn`` to each item, results in input order whatever ``threads`` is."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# The algorithm
# --------------------------------------------------------------------------


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def abc_rejection(model: ModelSpec, norm: AcceptanceNorm, cfg: AbcConfig) -> AbcRun:
    """Run basic rejection ABC.

    A proposal is accepted when ``||W (S(X) - s_star)||_2 <= delta``. In
    ``FixedAccepted`` mode the run counts every proposal up to and including
    the n-th acceptance; in ``FixedProposals`` mode exactly ``n_hat``
    proposals are tested.
    """
    s_star = cfg.s_star
    if s_star.shape != (model.q,):
        raise ValueError(f"s_star has length {s_star.size}, model has q={model.q}")
    if norm.q != model.q:
        raise ValueError(f"norm is {norm.q}-dimensional, model has q={model.q}")

    rng = make_rng(cfg.seed)
    delta = float(cfg.delta)
    thetas, dists = [], []
    mode = cfg.mode

    if isinstance(mode, FixedProposals):
        remaining = int(mode.n_hat)
        while remaining > 0:
            theta, s = model.propose(rng, BLOCK_SIZE)
            take = min(remaining, BLOCK_SIZE)
            dist = norm.distance(s[:take] - s_star)
            keep = dist <= delta
            thetas.append(theta[:take][keep])
            dists.append(dist[keep])
            remaining -= take
        n_proposals = int(mode.n_hat)
    elif isinstance(mode, FixedAccepted):
        need = int(mode.n)
        cap = int(cfg.max_proposals)
        n_proposals = 0
        while True:
            theta, s = model.propose(rng, BLOCK_SIZE)
            dist = norm.distance(s - s_star)
            hits = np.flatnonzero(dist <= delta)
            if hits.size >= need:
                hits = hits[:need]
                n_proposals += int(hits[-1]) + 1
            else:
                n_proposals += BLOCK_SIZE
            if n_proposals > cap:
                raise ProposalCapExceeded(
                    f"more than {cap} proposals before {mode.n} acceptances at "
                    f"delta={delta:g}; acceptance probability is too small"
                )
            thetas.append(theta[hits])
            dists.append(dist[hits])
            need -= hits.size
            if need == 0:
                break
    else:
        raise TypeError(f"unknown stopping mode {mode!r}")

    accepted = np.concatenate(thetas) if thetas else np.empty((0, model.p))
    distances = np.concatenate(dists) if dists else np.empty(0)
    return AbcRun(
        accepted=_frozen(accepted),
        distances=_frozen(distances),
        n_accepted=int(accepted.shape[0]),
        n_proposals=n_proposals,
        delta=delta,
        seed=int(cfg.seed),
    )


def posterior_estimate(run: AbcRun, h: Callable[[np.ndarray], np.ndarray], fallback_c: float = 0.0) -> float:
    """Mean of ``h`` over the accepted samples, or ``fallback_c`` if there are none.

    ``h`` is vectorised: it maps an ``(n, p)`` array to ``n`` values.
    """
    if run.n_accepted == 0:
        return float(fallback_c)
    values = np.asarray(h(run.accepted), dtype=float).reshape(run.n_accepted)
    return float(math.fsum(values) / run.n_accepted)


def run_cost(run: AbcRun, cm: CostModel) -> float:
    return cm.a + cm.b * run.n_proposals
