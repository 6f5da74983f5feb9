import numpy as np
import pytest

from attrisk.model import CountPanel, CovariateSeries, ParamState, PriorConfig
from attrisk.synthetic import GeneratorSpec, generate_panel, sample_prior_state
from attrisk import kernels

HARNESS_PRIOR = PriorConfig(beta_sd=1.0, var_lower=0.1, var_upper=5.0, cauchy_scale=0.3)


def harness_covariates(T: int) -> CovariateSeries:
    """Standardized trend-plus-wiggle covariate design used by the harnesses."""
    base = np.linspace(-1.0, 1.0, T)
    return CovariateSeries.from_raw(base, base * 0.6 + 0.05 * np.sin(np.arange(T)))


def random_state(rng, T: int, covs=None, logit_range=None) -> ParamState:
    """A valid random parameter state; optionally constrain every monthly
    logit probability into (lo, hi) given the covariates."""
    if logit_range is None:
        return sample_prior_state(rng, T, HARNESS_PRIOR)
    lo, hi = logit_range
    gamma = rng.uniform(-0.8, 0.8, 12)
    gamma -= gamma.mean()
    gamma -= gamma.mean()
    alpha = rng.uniform(-0.4, 0.4, T)
    delta = rng.uniform(-0.4, 0.4, T)
    slopes = rng.uniform(-0.3, 0.3, 2)
    spans = []
    for k, slope in zip(("A", "N"), slopes):
        part = slope * covs.x(k) + alpha + (delta if k == "A" else 0.0)
        cells = part[:, None] + gamma[None, :]
        spans.append((cells.min(), cells.max()))
    b0_lo = max(lo - s[0] for s in spans)
    b0_hi = min(hi - s[1] for s in spans)
    assert b0_lo < b0_hi, "logit range too tight for the drawn effects"
    intercepts = rng.uniform(b0_lo, b0_hi, 2)
    return ParamState(
        alpha=alpha, delta=delta, gamma=gamma,
        beta_A=np.array([intercepts[0], slopes[0]]),
        beta_N=np.array([intercepts[1], slopes[1]]),
        tau2=float(rng.uniform(0.2, 2.0)),
        sigma2=float(rng.uniform(0.2, 2.0)),
        omega2=float(rng.uniform(0.2, 2.0)),
    )


@pytest.fixture(scope="session")
def small_fixture():
    """T=5 synthetic panel with known truth, shared across tests."""
    T = 5
    rng = np.random.default_rng(20240817)
    covs = harness_covariates(T)
    truth = sample_prior_state(rng, T, HARNESS_PRIOR)
    spec = GeneratorSpec(np.arange(2000, 2000 + T), np.full(T, 50), truth, covs, seed=424242)
    panel = generate_panel(spec)
    return panel, covs, truth


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    return request.param
