import math

import numpy as np
import pytest

from attrisk.model import CountPanel, CovariateSeries, ParamState, PriorConfig
from attrisk.sampler import (
    AugmentedLatents,
    SamplerConfig,
    TUNE_FACTOR,
    _Chain,
    _Counters,
    gibbs_beta,
    gibbs_beta_moments,
    initial_state,
    merge_draws,
    propose_gamma,
    run_sampler,
    rwmh_block,
    tune,
)
from attrisk import kernels
from attrisk.synthetic import GeneratorSpec, generate_panel

from conftest import HARNESS_PRIOR, harness_covariates, random_state


def rng_of(seed):
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# propose_gamma
# ---------------------------------------------------------------------------


def test_propose_gamma_zero_step_is_identity():
    gamma = np.array([1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 0.25, -0.25, 3.0, -3.0, 0.0, 0.0])
    out = propose_gamma(gamma, 3, 0.0, rng_of(0))
    assert np.array_equal(out, gamma)


def test_propose_gamma_hand_arithmetic():
    out = propose_gamma(np.zeros(12), 0, 0.0, eps=1.2)
    expected = np.full(12, -0.1)
    expected[0] = 1.1
    assert np.allclose(out, expected, atol=1e-15)


def test_propose_gamma_sum_zero_property():
    rng = np.random.default_rng(1)
    for _ in range(200):
        gamma = rng.normal(0, 2, 12)
        gamma -= gamma.mean()
        gamma -= gamma.mean()
        j = int(rng.integers(12))
        out = propose_gamma(gamma, j, float(rng.uniform(0.01, 3.0)), rng_of(int(rng.integers(1 << 32))))
        assert abs(out.sum()) < 1e-12


def test_propose_gamma_requires_sum_zero_input():
    with pytest.raises(ValueError):
        propose_gamma(np.full(12, 0.1), 0, 1.0, rng_of(0))


# ---------------------------------------------------------------------------
# rwmh_block
# ---------------------------------------------------------------------------


def test_rwmh_flat_target_always_accepts():
    rng = rng_of(5)
    cur = np.array([0.0])
    for _ in range(200):
        cur, accepted = rwmh_block(cur, lambda b: 0.0, [[1.0]], rng)
        assert accepted


def test_rwmh_standard_normal_benchmark():
    # 1-d standard normal target, proposal sd 2.4: acceptance ~= 0.44
    rng = rng_of(99)
    target = lambda b: -0.5 * float(b @ b)
    cur = np.array([0.0])
    n = 100_000
    acc = 0
    total = 0.0
    for _ in range(n):
        cur, ok = rwmh_block(cur, target, [[2.4 ** 2]], rng)
        acc += ok
        total += cur[0]
    assert abs(total / n) < 0.02
    assert acc / n == pytest.approx(0.44, abs=0.03)


def test_rwmh_minus_inf_target_always_rejects():
    rng = rng_of(2)
    cur = np.array([0.5])

    def bounded(b):
        return 0.0 if abs(b[0]) <= 0.5 else -math.inf

    # huge steps: every proposal leaves the support and must be rejected
    for _ in range(100):
        new, accepted = rwmh_block(cur, bounded, [[1000.0]], rng)
        assert not accepted
        assert new[0] == cur[0]


def test_rwmh_validates_covariance():
    rng = rng_of(3)
    with pytest.raises(ValueError):
        rwmh_block(np.array([0.0, 0.0]), lambda b: 0.0, [[1.0, 0.2], [0.3, 1.0]], rng)
    with pytest.raises(np.linalg.LinAlgError):
        rwmh_block(np.array([0.0, 0.0]), lambda b: 0.0, [[1.0, 2.0], [2.0, 1.0]], rng)


# ---------------------------------------------------------------------------
# gibbs_beta
# ---------------------------------------------------------------------------


def test_gibbs_beta_flat_prior_limit_is_least_squares():
    rng = np.random.default_rng(8)
    x = np.array([-1.2, -0.3, 0.4, 1.1, 2.0])
    y = 0.7 - 1.3 * x + rng.normal(0, 0.1, x.size)
    mean, _ = gibbs_beta_moments(y, x, variance=1.0, prior_sd=1e6)
    X = np.column_stack([np.ones_like(x), x])
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.allclose(mean, ols, atol=1e-3)


def test_gibbs_beta_zero_targets_shrink_to_zero():
    x = np.array([-1.0, 0.0, 1.0])
    mean, _ = gibbs_beta_moments(np.zeros(3), x, variance=1.0, prior_sd=10.0)
    assert np.array_equal(mean, np.zeros(2))


def test_gibbs_beta_monte_carlo_matches_analytic():
    y = np.array([1.0, 2.0, 3.0])
    x = np.array([-1.0, 0.0, 1.0])
    variance, prior_sd = 1.0, 10.0
    # independent closed form
    X = np.column_stack([np.ones_like(x), x])
    V = np.linalg.inv(X.T @ X / variance + np.eye(2) / prior_sd**2)
    m = V @ (X.T @ y / variance)
    rng = rng_of(77)
    draws = np.array([gibbs_beta(y, x, variance, prior_sd, rng) for _ in range(100_000)])
    se_mean = np.sqrt(np.diag(V) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - m) < 3 * se_mean)
    emp_cov = np.cov(draws.T)
    for i in range(2):
        for j in range(2):
            se = math.sqrt((V[i, i] * V[j, j] + V[i, j] ** 2) / draws.shape[0])
            assert abs(emp_cov[i, j] - V[i, j]) < 3 * se


def test_gibbs_beta_validation():
    rng = rng_of(0)
    with pytest.raises(ValueError):
        gibbs_beta(np.array([1.0]), np.array([1.0]), 1.0, 1.0, rng)  # T < 2
    with pytest.raises(ValueError):
        gibbs_beta(np.array([1.0, 2.0]), np.array([1.0, 2.0]), -1.0, 1.0, rng)


def test_joint_beta_gibbs_step_matches_analytic_conditional(small_fixture):
    # iterate step 3(S) alone with frozen latents: draws must follow the
    # exact 4-d Gaussian conditional of (beta_N, beta_A) given (eta, nu)
    panel, covs, _ = small_fixture
    prior = HARNESS_PRIOR
    config = SamplerConfig(seed=21, iterations=10, tune_cycles=0, tune_iterations=())
    chain = _Chain(panel, covs, prior, config, kernels.get_backend(None), rng_of(17))
    chain.alpha = np.array([0.3, -0.2, 0.1, 0.4, -0.5])
    chain.delta = np.array([-0.1, 0.2, 0.3, -0.4, 0.2])
    chain.beta_A = np.array([-1.0, 0.3])
    chain.beta_N = np.array([-1.5, 0.1])
    chain.tau2, chain.sigma2 = 0.7, 0.4
    chain.eta = chain._recompute_eta()
    chain.nu = chain._recompute_nu()
    eta0, nu0 = chain.eta.copy(), chain.nu.copy()

    d = nu0 - eta0
    P = chain.GU / chain.tau2 + chain.GW / chain.sigma2 + np.eye(4) / prior.beta_sd**2
    V = np.linalg.inv(P)
    m = V @ (chain.U.T @ eta0 / chain.tau2 + chain.W.T @ d / chain.sigma2)

    n_draws = 40_000
    out = np.empty((n_draws, 4))
    for i in range(n_draws):
        chain._step_beta_gibbs()
        out[i] = np.concatenate([chain.beta_N, chain.beta_A])
        assert np.array_equal(chain.eta, eta0)
        assert np.array_equal(chain.nu, nu0)
        lat = AugmentedLatents.from_state(chain.state(), covs)
        if i == 0:
            assert lat.max_reconstruction_error(chain.state(), covs) < 1e-10
    se_mean = np.sqrt(np.diag(V) / n_draws)
    assert np.all(np.abs(out.mean(axis=0) - m) < 3.5 * se_mean)
    emp_cov = np.cov(out.T)
    for i in range(4):
        for j in range(4):
            se = math.sqrt((V[i, i] * V[j, j] + V[i, j] ** 2) / n_draws)
            assert abs(emp_cov[i, j] - V[i, j]) < 3.5 * se


# ---------------------------------------------------------------------------
# run_sampler
# ---------------------------------------------------------------------------


def short_config(**kw):
    base = dict(seed=11, iterations=120, tune_cycles=1, tune_iterations=(60,))
    base.update(kw)
    return SamplerConfig(**base)


def test_run_sampler_deterministic(small_fixture):
    panel, covs, _ = small_fixture
    cfg = short_config()
    d1 = run_sampler(panel, covs, HARNESS_PRIOR, cfg)
    d2 = run_sampler(panel, covs, HARNESS_PRIOR, cfg)
    for name in ("alpha", "delta", "gamma", "beta_A", "beta_N", "tau2", "sigma2", "omega2"):
        assert np.array_equal(getattr(d1, name), getattr(d2, name))
    assert d1.acceptance_rates.keys() == d2.acceptance_rates.keys()
    d3 = run_sampler(panel, covs, HARNESS_PRIOR, short_config(seed=12))
    assert not np.array_equal(d1.tau2, d3.tau2)


@pytest.mark.parametrize("iterations,burn_in,thin,expected", [
    (10, 0, 1, 11),
    (10, 3, 2, 4),   # kept at 3, 5, 7, 9
    (10, 0, 5, 3),   # kept at 0, 5, 10
    (100, 10, 7, 13),
    (7, 6, 3, 1),
])
def test_retention_rule(small_fixture, iterations, burn_in, thin, expected):
    panel, covs, _ = small_fixture
    cfg = short_config(iterations=iterations, burn_in=burn_in, thin=thin)
    assert cfg.n_keep == expected
    draws = run_sampler(panel, covs, HARNESS_PRIOR, cfg)
    assert len(draws) == expected


def test_run_sampler_invariants_hold(small_fixture):
    panel, covs, _ = small_fixture
    draws = run_sampler(panel, covs, HARNESS_PRIOR, short_config(iterations=200),
                        check_invariants=True)
    assert np.all(np.abs(draws.gamma.sum(axis=1)) < 1e-10)
    assert np.all((draws.tau2 > HARNESS_PRIOR.var_lower) & (draws.tau2 < HARNESS_PRIOR.var_upper))
    assert np.all((draws.sigma2 > HARNESS_PRIOR.var_lower) & (draws.sigma2 < HARNESS_PRIOR.var_upper))
    assert np.all(draws.omega2 > 0)
    for rate in draws.acceptance_rates.values():
        r = np.atleast_1d(np.asarray(rate))
        assert np.all((r >= 0) & (r <= 1))
    # every stored state satisfies the container invariants
    for i in (0, len(draws) - 1):
        draws.state(i)


def test_run_sampler_respects_logit_bound(small_fixture):
    panel, covs, _ = small_fixture
    prior = PriorConfig(beta_sd=1.0, var_lower=0.1, var_upper=5.0,
                        cauchy_scale=0.3, logit_bound=6.0)
    draws = run_sampler(panel, covs, prior, short_config(iterations=300))
    from attrisk.model import within_logit_bound
    for i in range(0, len(draws), 37):
        assert within_logit_bound(draws.state(i), covs, 6.0)


def test_run_sampler_config_validation(small_fixture):
    panel, covs, _ = small_fixture
    with pytest.raises(ValueError):
        SamplerConfig(seed=1, iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        SamplerConfig(seed=1, thin=0)
    with pytest.raises(ValueError):
        SamplerConfig(seed=1, tune_cycles=2, tune_iterations=(100,))
    with pytest.raises(ValueError):
        SamplerConfig(seed=1, prop_corr_alpha_delta=-1.0)
    bad_covs = CovariateSeries(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        run_sampler(panel, bad_covs, HARNESS_PRIOR, short_config())


def test_run_sampler_handles_all_zero_counts():
    T = 3
    panel = CountPanel(np.arange(2000, 2003), np.zeros((2, T, 12), dtype=np.int64),
                       np.full(T, 50))
    covs = harness_covariates(T)
    draws = run_sampler(panel, covs, HARNESS_PRIOR, short_config(iterations=100))
    assert len(draws) == 101
    assert np.isfinite(draws.beta_A).all()


def test_initial_state_clamps_into_bound():
    T = 2
    counts = np.zeros((2, T, 12), dtype=np.int64)  # empirical p ~ 0
    panel = CountPanel(np.arange(2000, 2002), counts, np.full(T, 50))
    covs = CovariateSeries(np.zeros(T), np.zeros(T))
    prior = PriorConfig(logit_bound=5.0)
    st = initial_state(panel, covs, prior)
    assert -4.0 <= st.beta_A[0] <= 4.0
    from attrisk.model import within_logit_bound
    assert within_logit_bound(st, covs, 5.0)


def test_merge_draws_concatenates_in_order(small_fixture):
    panel, covs, _ = small_fixture
    d1 = run_sampler(panel, covs, HARNESS_PRIOR, short_config(seed=1))
    d2 = run_sampler(panel, covs, HARNESS_PRIOR, short_config(seed=2))
    merged = merge_draws([d1, d2])
    assert len(merged) == len(d1) + len(d2)
    assert np.array_equal(merged.tau2[:len(d1)], d1.tau2)
    assert np.array_equal(merged.tau2[len(d1):], d2.tau2)


def test_augmented_latents_roundtrip(small_fixture):
    _, covs, truth = small_fixture
    lat = AugmentedLatents.from_state(truth, covs)
    assert lat.max_reconstruction_error(truth, covs) < 1e-10
    # alpha recoverable from kappa, delta from xi
    assert np.allclose(lat.kappa * math.sqrt(truth.tau2), truth.alpha, atol=1e-12)
    assert np.allclose(lat.xi * math.sqrt(truth.sigma2), truth.delta, atol=1e-12)


# ---------------------------------------------------------------------------
# tuning
# ---------------------------------------------------------------------------


def test_tune_adjustment_directions(small_fixture):
    panel, covs, _ = small_fixture
    # absurdly large initial steps: acceptance ~ 0, steps must shrink
    cfg_big = SamplerConfig(seed=5, iterations=10, tune_cycles=2, tune_iterations=(80, 80),
                            step_alpha_delta=60.0, step_gamma=60.0, step_beta=60.0)
    steps, _, history = tune(panel, covs, HARNESS_PRIOR, cfg_big)
    assert np.all(steps["alpha_delta"] < 60.0)
    assert np.all(steps["gamma"] < 60.0)
    assert steps["beta_A"] < 60.0
    assert np.all(np.asarray(history[0]["alpha_delta"]) < 0.3)
    # tiny steps: acceptance ~ 1, steps must grow by the fixed factor
    cfg_small = SamplerConfig(seed=5, iterations=10, tune_cycles=1, tune_iterations=(80,),
                              step_alpha_delta=1e-5)
    steps2, _, history2 = tune(panel, covs, HARNESS_PRIOR, cfg_small)
    assert np.all(steps2["alpha_delta"] == pytest.approx(1e-5 * TUNE_FACTOR))
    assert np.all(np.asarray(history2[0]["alpha_delta"]) > 0.4)


def test_tune_multiplicative_factor_is_exact(small_fixture):
    panel, covs, _ = small_fixture
    cfg = SamplerConfig(seed=5, iterations=10, tune_cycles=1, tune_iterations=(50,),
                        step_beta=1e-6)
    steps, _, _ = tune(panel, covs, HARNESS_PRIOR, cfg)
    assert steps["beta_A"] == pytest.approx(1e-6 * TUNE_FACTOR, rel=1e-12)


def test_counters_rates_shape():
    c = _Counters(4)
    c.hit("alpha_delta", 2, True)
    c.hit("alpha_delta", 2, False)
    c.hit("omega2", None, True)
    rates = c.rates()
    assert rates["alpha_delta"][2] == 0.5
    assert rates["omega2"] == 1.0
