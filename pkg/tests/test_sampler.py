import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abc_rates.exceptions import NonSymmetric, NotPositiveDefinite, ProposalCapExceeded
from abc_rates.sampler import (
    AbcConfig,
    AbcRun,
    AcceptanceNorm,
    CostModel,
    FixedAccepted,
    FixedProposals,
    ModelSpec,
    abc_rejection,
    derive_replicate_seed,
    map_replicates,
    posterior_estimate,
    run_cost,
    transform_summary,
    whitening_transform,
)
from abc_rates.toy import IndicatorTest, ball_moments, toy_model

S_STAR = (1.0, 1.0)


def random_spd(rng, q):
    M = rng.standard_normal((q, q))
    return M @ M.T + q * np.eye(q) * rng.uniform(0.1, 1.0)


def make_run(thetas):
    a = np.asarray(thetas, dtype=float).reshape(len(thetas), -1)
    return AbcRun(a, np.zeros(len(thetas)), len(thetas), max(len(thetas), 1), 1.0, 0)


# ---------------------------------------------------------------- whitening


def test_whitening_identity():
    norm = whitening_transform(np.eye(2))
    np.testing.assert_allclose(norm.W, np.eye(2), atol=1e-15)


def test_whitening_diagonal():
    norm = whitening_transform(np.diag([4.0, 9.0]))
    np.testing.assert_allclose(norm.W, np.diag([0.5, 1 / 3]), atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_whitening_random_spd_against_direct_inverse(seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, 3)
    W = whitening_transform(A).W
    A_inv = np.linalg.inv(A)
    np.testing.assert_allclose(W @ W, A_inv, atol=1e-10)
    np.testing.assert_allclose(W @ A @ W, np.eye(3), atol=1e-10)
    s = rng.standard_normal((50, 3))
    lhs = np.sum((s @ W) ** 2, axis=1)
    rhs = np.einsum("ij,jk,ik->i", s, A_inv, s)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


def test_whitening_rejects_asymmetric():
    with pytest.raises(NonSymmetric):
        whitening_transform([[1.0, 0.1], [0.0, 1.0]])


@pytest.mark.parametrize("A", [[[1.0, 0.0], [0.0, 0.0]], [[1.0, 2.0], [2.0, 1.0]], [[-1.0, 0], [0, -2.0]]])
def test_whitening_rejects_indefinite(A):
    with pytest.raises(NotPositiveDefinite):
        whitening_transform(A)


# ---------------------------------------------------------------- config


@pytest.mark.parametrize("delta", [0.0, -1.0])
def test_config_rejects_nonpositive_delta(delta):
    with pytest.raises(ValueError):
        AbcConfig(S_STAR, delta, FixedAccepted(1), 0)


def test_modes_reject_zero_sizes():
    with pytest.raises(ValueError):
        FixedAccepted(0)
    with pytest.raises(ValueError):
        FixedProposals(0)


def test_cost_model_invariants():
    with pytest.raises(ValueError):
        CostModel(a=-1.0, b=1.0)
    with pytest.raises(ValueError):
        CostModel(a=0.0, b=0.0)


def test_model_dimension_mismatch_detected():
    bad = ModelSpec(1, 2, 2, lambda rng, n: rng.standard_normal((n, 1)),
                    lambda th, rng: rng.standard_normal((th.shape[0], 3)), lambda x: x[:, :2])
    with pytest.raises(ValueError, match="declared"):
        abc_rejection(bad, AcceptanceNorm.identity(2), AbcConfig(S_STAR, 1.0, FixedAccepted(1), 0))


# ---------------------------------------------------------------- rejection


def test_accept_all_sentinel():
    run = abc_rejection(toy_model(), AcceptanceNorm.identity(2),
                        AbcConfig(S_STAR, math.inf, FixedAccepted(37), 5))
    assert run.n_accepted == run.n_proposals == 37
    assert run.accepted.shape == (37, 1)


@pytest.mark.parametrize("mode", [FixedAccepted(50), FixedProposals(20_000)])
def test_run_is_pure_function_of_config(mode):
    cfg = AbcConfig(S_STAR, 0.5, mode, 1234)
    a = abc_rejection(toy_model(), AcceptanceNorm.identity(2), cfg)
    b = abc_rejection(toy_model(), AcceptanceNorm.identity(2), cfg)
    assert a.n_proposals == b.n_proposals
    assert a.accepted.tobytes() == b.accepted.tobytes()


def test_fixed_accepted_exact_count_and_soundness():
    run = abc_rejection(toy_model(), AcceptanceNorm.identity(2),
                        AbcConfig(S_STAR, 0.3, FixedAccepted(250), 9))
    assert run.n_accepted == 250
    assert run.n_accepted <= run.n_proposals
    assert np.all(run.distances <= 0.3)
    # the last proposal of a fixed-n run is always an acceptance
    theta_stream = abc_rejection(toy_model(), AcceptanceNorm.identity(2),
                                 AbcConfig(S_STAR, 0.3, FixedProposals(run.n_proposals), 9))
    assert theta_stream.n_accepted == 250
    np.testing.assert_array_equal(theta_stream.accepted, run.accepted)
    shorter = abc_rejection(toy_model(), AcceptanceNorm.identity(2),
                            AbcConfig(S_STAR, 0.3, FixedProposals(run.n_proposals - 1), 9))
    assert shorter.n_accepted == 249


def test_fixed_proposals_exact_count():
    run = abc_rejection(toy_model(), AcceptanceNorm.identity(2),
                        AbcConfig(S_STAR, 0.5, FixedProposals(10_001), 3))
    assert run.n_proposals == 10_001
    assert run.n_accepted == len(run.distances)
    assert np.all(run.distances <= 0.5)


def test_results_are_read_only():
    run = abc_rejection(toy_model(), AcceptanceNorm.identity(2),
                        AbcConfig(S_STAR, 1.0, FixedAccepted(5), 0))
    with pytest.raises(ValueError):
        run.accepted[0, 0] = 1.0


def test_boundary_ties_accept():
    # constant summary lands exactly on the boundary
    model = ModelSpec(1, 1, 1, lambda rng, n: rng.standard_normal((n, 1)),
                      lambda th, rng: np.full((th.shape[0], 1), 2.0), lambda x: x)
    run = abc_rejection(model, AcceptanceNorm.identity(1), AbcConfig([1.5], 0.5, FixedProposals(10), 0))
    assert run.n_accepted == 10


def test_proposal_cap():
    cfg = AbcConfig(S_STAR, 1e-6, FixedAccepted(10), 0, max_proposals=50_000)
    with pytest.raises(ProposalCapExceeded):
        abc_rejection(toy_model(), AcceptanceNorm.identity(2), cfg)


@given(seed=st.integers(0, 2**64 - 1), d1=st.floats(0.05, 2.0), d2=st.floats(0.05, 2.0))
@settings(max_examples=25, deadline=None)
def test_accepted_sets_nested_in_delta(seed, d1, d2):
    lo, hi = sorted([d1, d2])
    small = abc_rejection(toy_model(), AcceptanceNorm.identity(2), AbcConfig(S_STAR, lo, FixedProposals(5000), seed))
    big = abc_rejection(toy_model(), AcceptanceNorm.identity(2), AbcConfig(S_STAR, hi, FixedProposals(5000), seed))
    big_rows = {row.tobytes() for row in big.accepted}
    assert all(row.tobytes() in big_rows for row in small.accepted)
    assert small.n_accepted <= big.n_accepted


@pytest.mark.parametrize("seed", range(5))
def test_norm_equivalence(seed):
    rng = np.random.default_rng(100 + seed)
    A = random_spd(rng, 2)
    norm = whitening_transform(A)
    model = toy_model()
    s_star = np.array(S_STAR)
    cfg_a = AbcConfig(s_star, 0.4, FixedProposals(30_000), seed)
    cfg_w = AbcConfig(norm.W @ s_star, 0.4, FixedProposals(30_000), seed)
    run_a = abc_rejection(model, norm, cfg_a)
    run_w = abc_rejection(transform_summary(model, norm.W), AcceptanceNorm.identity(2), cfg_w)
    assert run_a.n_accepted == run_w.n_accepted > 0
    np.testing.assert_array_equal(run_a.accepted, run_w.accepted)
    np.testing.assert_allclose(run_a.distances, run_w.distances, rtol=1e-12)


# ---------------------------------------------------------------- statistics


def test_acceptance_rate_matches_quadrature():
    p = ball_moments(S_STAR, 0.1).p_delta
    assert p == pytest.approx(2.07e-3, rel=0.01)
    n_hat = 10**6
    run = abc_rejection(toy_model(), AcceptanceNorm.identity(2), AbcConfig(S_STAR, 0.1, FixedProposals(n_hat), 42))
    se = math.sqrt(p * (1 - p) / n_hat)
    assert abs(run.n_accepted / n_hat - p) <= 3 * se


def test_mean_proposals_is_n_over_p():
    p = ball_moments(S_STAR, 0.1).p_delta
    n, runs = 100, 200
    props = np.array([
        abc_rejection(toy_model(), AcceptanceNorm.identity(2),
                      AbcConfig(S_STAR, 0.1, FixedAccepted(n), derive_replicate_seed(7, i))).n_proposals
        for i in range(runs)
    ])
    se = props.std(ddof=1) / math.sqrt(runs)
    assert abs(props.mean() - n / p) <= 3 * se
    cm = CostModel(a=10.0, b=2.0)
    costs = 10.0 + 2.0 * props
    assert abs(costs.mean() - (cm.a + cm.b * n / p)) <= 3 * 2.0 * se


def test_law_of_large_numbers():
    bm = ball_moments(S_STAR, 0.5)
    h = IndicatorTest()
    norm = AcceptanceNorm.identity(2)
    hits = 0
    devs = {100: [], 1000: [], 10_000: []}
    for trial in range(100):
        for n in devs:
            run = abc_rejection(toy_model(), norm, AbcConfig(S_STAR, 0.5, FixedAccepted(n), derive_replicate_seed(trial, n)))
            devs[n].append(abs(posterior_estimate(run, h) - bm.y_delta))
        hits += devs[10_000][-1] <= 4 * math.sqrt(bm.sigma2_delta / 10_000)
    assert hits >= 95
    assert np.mean(devs[10_000]) < np.mean(devs[1000]) < np.mean(devs[100])


# ---------------------------------------------------------------- estimator, cost


def test_posterior_estimate_constant_h():
    run = make_run([0.1, 5.0, -3.0])
    assert posterior_estimate(run, lambda t: np.ones(len(t))) == 1.0


def test_posterior_estimate_indicator():
    assert posterior_estimate(make_run([0.2, 0.6, 0.4]), IndicatorTest()) == pytest.approx(2 / 3, abs=1e-15)


def test_posterior_estimate_fallback():
    empty = AbcRun(np.empty((0, 1)), np.empty(0), 0, 1000, 0.1, 0)
    assert posterior_estimate(empty, IndicatorTest(), fallback_c=0.3829) == 0.3829


@pytest.mark.parametrize("a,b,N,expected", [(0, 1, 5000, 5000), (10, 2, 100, 210)])
def test_run_cost(a, b, N, expected):
    run = AbcRun(np.empty((0, 1)), np.empty(0), 0, N, 1.0, 0)
    assert run_cost(run, CostModel(a, b)) == expected


# ---------------------------------------------------------------- seeds


def test_replicate_seed_deterministic():
    assert derive_replicate_seed(123, 4) == derive_replicate_seed(123, 4)


def test_replicate_seed_distinct():
    rng = np.random.default_rng(0)
    for s in rng.integers(0, 2**63, size=10_000, dtype=np.int64):
        assert derive_replicate_seed(int(s), 0) != derive_replicate_seed(int(s), 1)


def test_replicate_seeds_no_collisions_across_indices():
    seeds = {derive_replicate_seed(2**64 - 1, i) for i in range(100_000)}
    assert len(seeds) == 100_000
    assert all(0 <= s < 2**64 for s in seeds)


def test_map_replicates_ordering_independent_of_threads():
    def work(i):
        run = abc_rejection(toy_model(), AcceptanceNorm.identity(2),
                            AbcConfig(S_STAR, 0.5, FixedAccepted(20), derive_replicate_seed(99, i)))
        return posterior_estimate(run, IndicatorTest()), run.n_proposals

    one = map_replicates(work, range(40), threads=1)
    eight = map_replicates(work, range(40), threads=8)
    assert np.array(one).tobytes() == np.array(eight).tobytes()
