import math

import numpy as np
import pytest
from scipy import stats

from attrisk.model import (
    CountPanel,
    CovariateSeries,
    ParamState,
    PriorConfig,
    inv_logit,
    linear_predictor,
    log_likelihood,
    log_prior,
    logit,
    predictor_matrix,
    within_logit_bound,
)

from conftest import harness_covariates, random_state


def zero_state(T):
    return ParamState(np.zeros(T), np.zeros(T), np.zeros(12),
                      np.zeros(2), np.zeros(2), 1.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# link
# ---------------------------------------------------------------------------


def test_logit_symmetry_point():
    assert logit(0.5) == 0.0


def test_logit_arithmetic():
    assert logit(0.75) == pytest.approx(math.log(3.0), abs=1e-12)


def test_logit_roundtrip():
    assert inv_logit(logit(0.0083)) == pytest.approx(0.0083, abs=1e-12)


def test_logit_roundtrip_wide_range():
    ps = np.concatenate([[1e-8, 1 - 1e-8], np.linspace(1e-6, 1 - 1e-6, 201)])
    back = inv_logit(logit(ps))
    assert np.max(np.abs(back - ps)) < 1e-12


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.7])
def test_logit_domain_error(bad):
    with pytest.raises(ValueError):
        logit(bad)


def test_inv_logit_extreme_arguments_stay_interior():
    assert 0.0 < inv_logit(-40.0) < 1.0
    assert 0.0 < inv_logit(40.0) <= 1.0
    assert inv_logit(-745.0) >= 0.0  # no underflow crash


# ---------------------------------------------------------------------------
# linear predictor
# ---------------------------------------------------------------------------


def test_linear_predictor_zero_state():
    covs = CovariateSeries(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    assert linear_predictor(zero_state(2), covs, "A", 0, 3) == 0.0


def test_linear_predictor_hand_example():
    # factual: 1 + 0.5*2 + 0.1 + 0.2 - 0.3 = 2.0; counterfactual drops delta
    gamma = np.full(12, 0.3 / 11.0)  # sum-zero vector with gamma[4] = -0.3
    gamma[4] = -0.3
    state = ParamState(np.array([0.1]), np.array([0.2]), gamma,
                       np.array([1.0, 0.5]), np.array([1.0, 0.5]), 1, 1, 1)
    covs = CovariateSeries(np.array([2.0]), np.array([2.0]))
    assert linear_predictor(state, covs, "A", 0, 4) == pytest.approx(2.0, abs=1e-12)
    assert linear_predictor(state, covs, "N", 0, 4) == pytest.approx(1.8, abs=1e-12)


def test_linear_predictor_index_errors():
    covs = CovariateSeries(np.array([1.0]), np.array([1.0]))
    st = zero_state(1)
    with pytest.raises(IndexError):
        linear_predictor(st, covs, "A", 1, 0)
    with pytest.raises(IndexError):
        linear_predictor(st, covs, "A", 0, 12)
    with pytest.raises(ValueError):
        linear_predictor(st, covs, "X", 0, 0)


def test_predictor_matrix_matches_scalar_op():
    rng = np.random.default_rng(7)
    T = 4
    covs = harness_covariates(T)
    st = random_state(rng, T, covs, logit_range=(-6, 2))
    for k in ("A", "N"):
        mat = predictor_matrix(st, covs, k)
        for t in range(T):
            for j in range(12):
                assert mat[t, j] == pytest.approx(linear_predictor(st, covs, k, t, j), abs=1e-12)


# ---------------------------------------------------------------------------
# log-likelihood
# ---------------------------------------------------------------------------


def make_single_cell_panel(z, n):
    counts = np.zeros((2, 1, 12), dtype=np.int64)
    counts[0, 0, 0] = z
    return CountPanel(np.array([2000]), counts, np.array([n]))


def test_log_likelihood_fair_coin_cell():
    # one trial, one success, predictor zero in every cell
    counts = np.zeros((2, 1, 12), dtype=np.int64)
    counts[0, 0, 0] = 1
    panel = CountPanel(np.array([2000]), counts, np.array([1]))
    covs = CovariateSeries(np.zeros(1), np.zeros(1))
    # all 24 cells are Bernoulli(0.5): log L = 24 * log(0.5)
    assert log_likelihood(zero_state(1), panel, covs) == pytest.approx(24 * math.log(0.5), abs=1e-12)


def test_log_likelihood_single_cell_formula():
    # isolate one cell by comparing against the same panel with z changed
    p = 0.1
    b0 = logit(p)
    st = ParamState(np.zeros(1), np.zeros(1), np.zeros(12),
                    np.array([b0, 0.0]), np.array([b0, 0.0]), 1, 1, 1)
    covs = CovariateSeries(np.zeros(1), np.zeros(1))
    panel5 = make_single_cell_panel(5, 50)
    panel0 = make_single_cell_panel(0, 50)
    diff = log_likelihood(st, panel5, covs) - log_likelihood(st, panel0, covs)
    expected = (math.log(math.comb(50, 5)) + 5 * math.log(p) + 45 * math.log(1 - p)) \
        - 50 * math.log(1 - p)
    assert diff == pytest.approx(expected, abs=1e-9)
    # and the absolute value of the changed cell matches the pmf directly
    cell = math.log(math.comb(50, 5)) + 5 * math.log(p) + 45 * math.log(1 - p)
    rest = log_likelihood(st, panel0, covs) - (math.log(math.comb(50, 0)) + 50 * math.log(1 - p))
    assert log_likelihood(st, panel5, covs) == pytest.approx(rest + cell, abs=1e-9)


def test_log_likelihood_matches_cellwise_scipy_oracle(small_fixture):
    panel, covs, truth = small_fixture
    got = log_likelihood(truth, panel, covs)
    total = 0.0
    for k_idx, k in enumerate(("A", "N")):
        pred = predictor_matrix(truth, covs, k)
        p = inv_logit(pred)
        for t in range(panel.n_years):
            for j in range(12):
                total += stats.binom.logpmf(panel.counts[k_idx, t, j],
                                            panel.ensemble_sizes[t], p[t, j])
    assert got == pytest.approx(total, abs=1e-9)


def test_log_likelihood_partition_additivity(small_fixture):
    panel, covs, truth = small_fixture
    whole = log_likelihood(truth, panel, covs)
    # split the panel by years into two sub-panels
    for cut in (1, 2, 4):
        parts = []
        for sl in (slice(0, cut), slice(cut, panel.n_years)):
            sub_panel = CountPanel(panel.years[sl], panel.counts[:, sl], panel.ensemble_sizes[sl])
            sub_covs = CovariateSeries(covs.x_A[sl], covs.x_N[sl])
            sub_state = ParamState(truth.alpha[sl], truth.delta[sl], truth.gamma,
                                   truth.beta_A, truth.beta_N,
                                   truth.tau2, truth.sigma2, truth.omega2)
            parts.append(log_likelihood(sub_state, sub_panel, sub_covs))
        assert whole == pytest.approx(sum(parts), abs=1e-9)


def test_log_likelihood_cell_unimodality():
    # with every factual cell holding the same 0 < z < n, the block is 24x
    # the single-cell pmf: strictly decreasing in |predictor - logit(z/n)|
    z, n = 15, 50
    center = logit(z / n)
    covs = CovariateSeries(np.zeros(1), np.zeros(1))
    counts = np.full((2, 1, 12), z, dtype=np.int64)
    panel = CountPanel(np.array([2000]), counts, np.array([n]))

    def ll(pred):
        st = ParamState(np.zeros(1), np.zeros(1), np.zeros(12),
                        np.array([pred, 0.0]), np.array([center, 0.0]), 1, 1, 1)
        return log_likelihood(st, panel, covs)

    offsets = np.linspace(0.0, 4.0, 9)
    right = [ll(center + d) for d in offsets]
    left = [ll(center - d) for d in offsets]
    assert all(np.diff(right) < 0)
    assert all(np.diff(left) < 0)


# ---------------------------------------------------------------------------
# prior
# ---------------------------------------------------------------------------


def test_log_prior_uniform_support_violation():
    st = zero_state(3)
    st = ParamState(st.alpha, st.delta, st.gamma, st.beta_A, st.beta_N, 1001.0, 1.0, 1.0)
    assert log_prior(st, PriorConfig()) == -math.inf


def test_log_prior_closed_form_against_scipy():
    T = 4
    st = zero_state(T)
    cfg = PriorConfig()
    expected = (
        stats.norm.logpdf(np.zeros(T), scale=1.0).sum()          # alpha | tau2 = 1
        + stats.norm.logpdf(np.zeros(T), scale=1.0).sum()        # delta | sigma2 = 1
        + stats.norm.logpdf(np.zeros(12), scale=1.0).sum()       # gamma | omega2 = 1
        + 2 * stats.uniform.logpdf(1.0, loc=0, scale=1000.0)     # tau2, sigma2
        + stats.halfcauchy.logpdf(1.0, scale=10.0)               # omega2
        + stats.norm.logpdf(np.zeros(4), scale=10.0).sum()       # betas
    )
    assert log_prior(st, cfg) == pytest.approx(expected, abs=1e-10)


def test_log_prior_random_state_against_scipy():
    rng = np.random.default_rng(5)
    T = 6
    covs = harness_covariates(T)
    st = random_state(rng, T, covs, logit_range=(-7, 1))
    cfg = PriorConfig(beta_sd=3.0, var_upper=50.0, cauchy_scale=2.0)
    expected = (
        stats.norm.logpdf(st.alpha, scale=math.sqrt(st.tau2)).sum()
        + stats.norm.logpdf(st.delta, scale=math.sqrt(st.sigma2)).sum()
        + stats.norm.logpdf(st.gamma, scale=math.sqrt(st.omega2)).sum()
        + 2 * stats.uniform.logpdf(st.tau2, loc=0, scale=50.0)
        + stats.halfcauchy.logpdf(st.omega2, scale=2.0)
        + stats.norm.logpdf(np.concatenate([st.beta_A, st.beta_N]), scale=3.0).sum()
    )
    assert log_prior(st, cfg) == pytest.approx(expected, rel=1e-12)


def test_log_prior_bound_violation_is_minus_inf():
    T = 2
    covs = CovariateSeries(np.zeros(T), np.zeros(T))
    st = ParamState(np.zeros(T), np.zeros(T), np.zeros(12),
                    np.array([10.1, 0.0]), np.zeros(2), 1, 1, 1)
    cfg = PriorConfig(logit_bound=10.0)
    assert not within_logit_bound(st, covs, 10.0)
    assert log_prior(st, cfg, covs) == -math.inf
    # interior state is finite
    st_ok = ParamState(np.zeros(T), np.zeros(T), np.zeros(12),
                       np.array([9.0, 0.0]), np.zeros(2), 1, 1, 1)
    assert math.isfinite(log_prior(st_ok, cfg, covs))


def test_log_prior_bound_requires_covariates():
    st = zero_state(2)
    with pytest.raises(ValueError):
        log_prior(st, PriorConfig(logit_bound=10.0))


def test_log_prior_exchangeable_in_alpha_and_delta():
    rng = np.random.default_rng(11)
    T = 6
    covs = harness_covariates(T)
    st = random_state(rng, T, covs, logit_range=(-7, 1))
    cfg = PriorConfig()
    base = log_prior(st, cfg)
    perm = rng.permutation(T)
    st_perm_a = ParamState(st.alpha[perm], st.delta, st.gamma, st.beta_A, st.beta_N,
                           st.tau2, st.sigma2, st.omega2)
    st_perm_d = ParamState(st.alpha, st.delta[perm], st.gamma, st.beta_A, st.beta_N,
                           st.tau2, st.sigma2, st.omega2)
    assert log_prior(st_perm_a, cfg) == pytest.approx(base, rel=1e-14)
    assert log_prior(st_perm_d, cfg) == pytest.approx(base, rel=1e-14)


def test_log_prior_gamma_shift_invariance_after_projection():
    # adding a constant and re-centering lands on the same constrained vector
    rng = np.random.default_rng(13)
    gamma = rng.normal(0, 1, 12)
    gamma -= gamma.mean()
    gamma -= gamma.mean()
    shifted = gamma + 0.7
    shifted -= shifted.mean()
    shifted -= shifted.mean()
    st1 = ParamState(np.zeros(2), np.zeros(2), gamma, np.zeros(2), np.zeros(2), 1, 1, 1)
    st2 = ParamState(np.zeros(2), np.zeros(2), shifted, np.zeros(2), np.zeros(2), 1, 1, 1)
    cfg = PriorConfig()
    assert log_prior(st1, cfg) == pytest.approx(log_prior(st2, cfg), rel=1e-12)


def test_log_prior_gamma_sum_violation():
    st = zero_state(2)
    bad_gamma = np.zeros(12)
    bad_gamma[0] = 1e-6
    object.__setattr__(st, "gamma", bad_gamma)  # bypass the constructor check
    assert log_prior(st, PriorConfig()) == -math.inf


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------


def test_count_panel_invariants():
    years = np.array([2000, 2001])
    good = np.zeros((2, 2, 12), dtype=np.int64)
    sizes = np.array([10, 10])
    CountPanel(years, good, sizes)
    with pytest.raises(ValueError):
        CountPanel(years, good, np.array([0, 10]))  # n_t >= 1
    bad = good.copy()
    bad[0, 0, 0] = 11
    with pytest.raises(ValueError):
        CountPanel(years, bad, sizes)  # count > n
    with pytest.raises(ValueError):
        CountPanel(np.array([2001, 2000]), good, sizes)  # unordered years
    with pytest.raises(ValueError):
        CountPanel(np.array([]), np.zeros((2, 0, 12), dtype=np.int64), np.array([]))


def test_covariate_series_standardization():
    raw_a = np.array([13.0, 14.5, 15.2, 16.0, 18.1])
    raw_n = raw_a - 0.6
    covs = CovariateSeries.from_raw(raw_a, raw_n)
    assert covs.standardized
    assert abs(covs.x_A.mean()) < 1e-9
    assert abs(covs.x_A.var(ddof=1) - 1.0) < 1e-6
    with pytest.raises(ValueError):
        CovariateSeries(raw_a, raw_n, standardized=True)


def test_param_state_invariants():
    with pytest.raises(ValueError):
        ParamState(np.zeros(2), np.zeros(2), np.full(12, 0.1),
                   np.zeros(2), np.zeros(2), 1, 1, 1)  # gamma sum != 0
    with pytest.raises(ValueError):
        ParamState(np.zeros(2), np.zeros(2), np.zeros(12),
                   np.zeros(2), np.zeros(2), -1.0, 1, 1)  # negative variance


def test_prior_config_validation():
    with pytest.raises(ValueError):
        PriorConfig(beta_sd=0.0)
    with pytest.raises(ValueError):
        PriorConfig(var_lower=5.0, var_upper=5.0)
    with pytest.raises(ValueError):
        PriorConfig(logit_bound=-3.0)
