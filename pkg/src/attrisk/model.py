"""Core model quantities.

Domain containers (count panel, covariate series, parameter state, prior
configuration) together with the logit link, the linear predictor, the
binomial log-likelihood and the log-prior. Everything in this module is a
pure function of its inputs; the MCMC machinery in :mod:`attrisk.sampler`
and the hot kernels behind :mod:`attrisk.kernels` build on these
definitions.

Conventions
-----------
* Scenario ``"A"`` is the factual (all-forcings) ensemble, ``"N"`` the
  counterfactual (natural-only) ensemble. Stacked arrays index A first.
* Months are indexed 0..11; a panel always carries all 12 months.
* The monthly-effect vector ``gamma`` is constrained to sum to zero
  (tolerance ``GAMMA_SUM_TOL``); the prior density is evaluated on the
  constrained vector without renormalization (the constant cancels in
  Metropolis-Hastings ratios).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

N_MONTHS = 12
SCENARIOS = ("A", "N")
GAMMA_SUM_TOL = 1e-10


def scenario_index(k: str) -> int:
    try:
        return SCENARIOS.index(k)
    except ValueError:
        raise ValueError(f"unknown scenario {k!r}; expected one of {SCENARIOS}") from None


# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CountPanel:
    """Observed event counts per scenario/year/month with ensemble sizes.

    Attributes
    ----------
    years : (T,) int array, strictly increasing calendar years
    counts : (2, T, 12) int array; axis 0 indexes scenario (A, N)
    ensemble_sizes : (T,) int array, simulations available per year
    """

    years: np.ndarray
    counts: np.ndarray
    ensemble_sizes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "years", np.asarray(self.years, dtype=np.int64))
        object.__setattr__(self, "counts", np.ascontiguousarray(self.counts, dtype=np.int64))
        object.__setattr__(self, "ensemble_sizes", np.ascontiguousarray(self.ensemble_sizes, dtype=np.int64))
        T = self.years.shape[0]
        if T < 1:
            raise ValueError("panel needs at least one year")
        if self.counts.shape != (2, T, N_MONTHS):
            raise ValueError(f"counts must have shape (2, {T}, {N_MONTHS}), got {self.counts.shape}")
        if self.ensemble_sizes.shape != (T,):
            raise ValueError("ensemble_sizes must match the number of years")
        if np.any(self.ensemble_sizes < 1):
            raise ValueError("ensemble sizes must be >= 1")
        if np.any(self.counts < 0) or np.any(self.counts > self.ensemble_sizes[None, :, None]):
            raise ValueError("counts must satisfy 0 <= count <= ensemble size")
        if np.any(np.diff(self.years) <= 0):
            raise ValueError("years must be strictly increasing")

    @property
    def n_years(self) -> int:
        return int(self.years.shape[0])

    def scenario_counts(self, k: str) -> np.ndarray:
        return self.counts[scenario_index(k)]


@dataclass(frozen=True)
class CovariateSeries:
    """Scenario-specific yearly covariate values (one covariate + intercept).

    ``standardized`` records whether mean-zero/unit-variance scaling was
    applied; standardization uses the sample variance (ddof=1).
    """

    x_A: np.ndarray
    x_N: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x_A", np.ascontiguousarray(self.x_A, dtype=np.float64))
        object.__setattr__(self, "x_N", np.ascontiguousarray(self.x_N, dtype=np.float64))
        if self.x_A.ndim != 1 or self.x_A.shape != self.x_N.shape:
            raise ValueError("covariate series must be 1-d and equal length")
        if self.standardized:
            for name, x in (("x_A", self.x_A), ("x_N", self.x_N)):
                if abs(x.mean()) >= 1e-9:
                    raise ValueError(f"{name} marked standardized but |mean| >= 1e-9")
                if abs(x.var(ddof=1) - 1.0) >= 1e-6:
                    raise ValueError(f"{name} marked standardized but |variance - 1| >= 1e-6")

    @classmethod
    def from_raw(cls, x_A_raw, x_N_raw) -> "CovariateSeries":
        """Standardize raw series (mean zero, unit sample variance)."""
        xa = np.asarray(x_A_raw, dtype=np.float64)
        xn = np.asarray(x_N_raw, dtype=np.float64)
        if xa.size < 2:
            raise ValueError("standardization needs at least two years")
        xa = (xa - xa.mean()) / xa.std(ddof=1)
        xn = (xn - xn.mean()) / xn.std(ddof=1)
        return cls(xa, xn, standardized=True)

    @property
    def n_years(self) -> int:
        return int(self.x_A.shape[0])

    def x(self, k: str) -> np.ndarray:
        return self.x_A if scenario_index(k) == 0 else self.x_N


@dataclass(frozen=True)
class ParamState:
    """One complete parameter vector of the hierarchical model."""

    alpha: np.ndarray   # (T,) shared yearly effects
    delta: np.ndarray   # (T,) factual-only yearly effects
    gamma: np.ndarray   # (12,) monthly effects, sum-zero
    beta_A: np.ndarray  # (intercept, slope)
    beta_N: np.ndarray
    tau2: float
    sigma2: float
    omega2: float

    def __post_init__(self):
        for name in ("alpha", "delta", "gamma", "beta_A", "beta_N"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "tau2", float(self.tau2))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "omega2", float(self.omega2))
        if self.alpha.shape != self.delta.shape or self.alpha.ndim != 1:
            raise ValueError("alpha and delta must be 1-d and equal length")
        if self.gamma.shape != (N_MONTHS,):
            raise ValueError(f"gamma must have length {N_MONTHS}")
        if self.beta_A.shape != (2,) or self.beta_N.shape != (2,):
            raise ValueError("beta_A and beta_N must be (intercept, slope) pairs")
        if abs(float(self.gamma.sum())) > GAMMA_SUM_TOL:
            raise ValueError("gamma must sum to zero within 1e-10")
        if not (self.tau2 > 0 and self.sigma2 > 0 and self.omega2 > 0):
            raise ValueError("variance parameters must be strictly positive")

    @property
    def n_years(self) -> int:
        return int(self.alpha.shape[0])

    def beta(self, k: str) -> np.ndarray:
        return self.beta_A if scenario_index(k) == 0 else self.beta_N

    def copy(self) -> "ParamState":
        return ParamState(
            self.alpha.copy(), self.delta.copy(), self.gamma.copy(),
            self.beta_A.copy(), self.beta_N.copy(),
            self.tau2, self.sigma2, self.omega2,
        )


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters.

    ``logit_bound`` is the symmetric truncation half-width L: when set, every
    monthly logit probability implied by a state must lie strictly inside
    (-L, L). ``None`` leaves the bound inactive. ``var_lower`` is zero for
    the standard prior; calibration harnesses may raise it (together with a
    smaller ``var_upper``) to keep synthetic panels non-degenerate.
    """

    beta_sd: float = 10.0
    var_upper: float = 1000.0
    cauchy_scale: float = 10.0
    logit_bound: float | None = None
    var_lower: float = 0.0

    def __post_init__(self):
        if self.beta_sd <= 0 or self.var_upper <= 0 or self.cauchy_scale <= 0:
            raise ValueError("scale parameters must be strictly positive")
        if not (0.0 <= self.var_lower < self.var_upper):
            raise ValueError("need 0 <= var_lower < var_upper")
        if self.logit_bound is not None and self.logit_bound <= 0:
            raise ValueError("logit_bound must be positive (or None)")


# ---------------------------------------------------------------------------
# Link and predictor
# ---------------------------------------------------------------------------


def logit(p):
    """log(p / (1 - p)); domain error outside the open unit interval."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("logit requires 0 < p < 1")
    out = np.log(arr) - np.log1p(-arr)
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out

def inv_logit(x):
    """Numerically stable inverse logit (branch form, via expit)."""
    out = expit(np.asarray(x, dtype=np.float64))
    return float(out) if np.isscalar(x) or out.ndim == 0 else out


def linear_predictor(state: ParamState, covs: CovariateSeries, k: str, t: int, j: int) -> float:
    """Monthly logit probability for scenario k, year index t, month index j."""
    T = state.n_years
    if not (0 <= t < T):
        raise IndexError(f"year index {t} out of range [0, {T})")
    if not (0 <= j < N_MONTHS):
        raise IndexError(f"month index {j} out of range [0, {N_MONTHS})")
    beta = state.beta(k)
    x = covs.x(k)[t]
    out = beta[0] + beta[1] * x + state.alpha[t] + state.gamma[j]
    if scenario_index(k) == 0:
        out += state.delta[t]
    return float(out)


def scenario_base(state: ParamState, covs: CovariateSeries, k: str) -> np.ndarray:
    """Per-year predictor component (everything except the monthly effect).

    For scenario A this equals the sufficient-augmentation latent nu_t,
    for scenario N the latent eta_t.
    """
    beta = state.beta(k)
    base = beta[0] + beta[1] * covs.x(k) + state.alpha
    if scenario_index(k) == 0:
        base = base + state.delta
    return base


def predictor_matrix(state: ParamState, covs: CovariateSeries, k: str) -> np.ndarray:
    """(T, 12) matrix of monthly logit probabilities for one scenario."""
    return scenario_base(state, covs, k)[:, None] + state.gamma[None, :]


def within_logit_bound(state: ParamState, covs: CovariateSeries, bound: float | None) -> bool:
    """True when every implied monthly logit probability is inside (-L, L)."""
    if bound is None:
        return True
    for k in SCENARIOS:
        pred = predictor_matrix(state, covs, k)
        if np.abs(pred).max() >= bound:
            return False
    return True


# ---------------------------------------------------------------------------
# Likelihood and prior
# ---------------------------------------------------------------------------


def binom_logpmf_constant(panel: CountPanel) -> float:
    """Parameter-free part of the panel log-likelihood: sum of log C(n_t, z).

    Evaluated through log-gamma so that ensemble sizes of several hundred do
    not overflow.
    """
    n = panel.ensemble_sizes[None, :, None].astype(np.float64)
    z = panel.counts.astype(np.float64)
    return float(np.sum(gammaln(n + 1.0) - gammaln(z + 1.0) - gammaln(n - z + 1.0)))


def log_likelihood(state: ParamState, panel: CountPanel, covs: CovariateSeries) -> float:
    """Binomial log-likelihood of the full panel under ``state``.

    Uses the identity z*log(p) + (n-z)*log(1-p) = z*x - n*softplus(x) with
    x the logit probability, which stays finite for any real predictor.
    """
    if panel.n_years != covs.n_years or panel.n_years != state.n_years:
        raise ValueError("panel, covariates and state disagree on the number of years")
    total = binom_logpmf_constant(panel)
    n = panel.ensemble_sizes[:, None].astype(np.float64)
    for k in SCENARIOS:
        pred = predictor_matrix(state, covs, k)
        z = panel.scenario_counts(k)
        total += float(np.sum(z * pred) - np.sum(n * np.logaddexp(0.0, pred)))
    return total


def _half_cauchy_logpdf(x: float, scale: float) -> float:
    if x <= 0.0:
        return -math.inf
    return math.log(2.0 / (math.pi * scale)) - math.log1p((x / scale) ** 2)


def log_prior(state: ParamState, prior: PriorConfig, covs: CovariateSeries | None = None) -> float:
    """Log prior density of a parameter state (``-inf`` on any violation).

    The monthly-effect density is the unnormalized restriction of the iid
    normal to the sum-zero hyperplane. When ``prior.logit_bound`` is active a
    covariate series is required so the implied logit probabilities can be
    checked against (-L, L).
    """
    if abs(float(state.gamma.sum())) > GAMMA_SUM_TOL:
        return -math.inf
    for v in (state.tau2, state.sigma2):
        if not (prior.var_lower < v < prior.var_upper):
            return -math.inf
    if state.omega2 <= 0.0:
        return -math.inf
    if prior.logit_bound is not None:
        if covs is None:
            raise ValueError("logit bound is active: covariates are required to evaluate the prior")
        if not within_logit_bound(state, covs, prior.logit_bound):
            return -math.inf

    T = state.n_years
    lp = 0.0
    lp += -0.5 * T * math.log(2.0 * math.pi * state.tau2) - 0.5 * float(state.alpha @ state.alpha) / state.tau2
    lp += -0.5 * T * math.log(2.0 * math.pi * state.sigma2) - 0.5 * float(state.delta @ state.delta) / state.sigma2
    lp += -0.5 * N_MONTHS * math.log(2.0 * math.pi * state.omega2) - 0.5 * float(state.gamma @ state.gamma) / state.omega2
    lp += 2.0 * -math.log(prior.var_upper - prior.var_lower)  # uniform on tau2 and sigma2
    lp += _half_cauchy_logpdf(state.omega2, prior.cauchy_scale)
    b2 = prior.beta_sd ** 2
    sq = float(state.beta_A @ state.beta_A + state.beta_N @ state.beta_N)
    lp += -2.0 * math.log(2.0 * math.pi * b2) - 0.5 * sq / b2
    return lp
