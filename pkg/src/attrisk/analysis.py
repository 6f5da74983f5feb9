"""Posterior estimands: yearly probabilities, risk ratios, the exceedance
diagnostic and variance summaries.

Per-draw operations take a single :class:`~attrisk.model.ParamState`;
series builders vectorize over all retained draws. Posterior quantiles are
the type-7 (linear interpolation) order statistics throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import N_MONTHS, CovariateSeries, ParamState, scenario_index
from .sampler import PosteriorDraws

DEFAULT_LEVELS = (0.025, 0.975)

QUANTITY_TAGS = ("prob_A", "prob_N", "risk_ratio", "adjusted_risk_ratio")


@dataclass(frozen=True)
class RiskSeries:
    """Per-year posterior summaries of one quantity."""

    years: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    quantity: str

    def __post_init__(self):
        if self.quantity not in QUANTITY_TAGS:
            raise ValueError(f"unknown quantity tag {self.quantity!r}")
        if not (np.all(self.lower <= self.median) and np.all(self.median <= self.upper)):
            raise ValueError("quantile ordering violated")
        if self.quantity.startswith("prob"):
            if np.any(self.lower < 0) or np.any(self.upper > 1):
                raise ValueError("probabilities must lie in [0, 1]")
        elif np.any(self.lower < 0):
            raise ValueError("risk ratios must be nonnegative")


@dataclass(frozen=True)
class PiEstimate:
    """Posterior summary of the fraction of years meeting a risk-ratio criterion."""

    cutoff: tuple
    direction: str
    lower: float
    median: float
    upper: float
    category: int

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.median <= self.upper <= 1.0):
            raise ValueError("pi quantiles must be ordered within [0, 1]")


# ---------------------------------------------------------------------------
# Per-draw estimands
# ---------------------------------------------------------------------------


def yearly_probabilities(draw: ParamState, covs: CovariateSeries, k: str) -> np.ndarray:
    """p_kt: monthly probabilities averaged over the 12 months."""
    beta = draw.beta(k)
    base = beta[0] + beta[1] * covs.x(k) + draw.alpha
    if scenario_index(k) == 0:
        base = base + draw.delta
    return expit(base[:, None] + draw.gamma[None, :]).mean(axis=1)


def risk_ratio(draw: ParamState, covs: CovariateSeries) -> np.ndarray:
    """Exact per-year risk ratio p_At / p_Nt."""
    return yearly_probabilities(draw, covs, "A") / yearly_probabilities(draw, covs, "N")


@dataclass(frozen=True)
class ApproxRiskRatio:
    """Small-probability factorization of the risk ratio.

    ``product`` = baseline * covariate_scale * year_factor; the monthly
    effects cancel exactly in this form, and the shared yearly effects drop
    out as well.
    """

    baseline: float            # exp(beta_A0 - beta_N0)
    covariate_scale: np.ndarray
    year_factor: np.ndarray    # exp(delta_t)

    @property
    def product(self) -> np.ndarray:
        return self.baseline * self.covariate_scale * self.year_factor


def approx_rr_decomposition(draw: ParamState, covs: CovariateSeries) -> ApproxRiskRatio:
    baseline = math.exp(draw.beta_A[0] - draw.beta_N[0])
    scale = np.exp(draw.beta_A[1] * covs.x_A - draw.beta_N[1] * covs.x_N)
    return ApproxRiskRatio(baseline, scale, np.exp(draw.delta))


def adjusted_risk_ratio(draw: ParamState, x_star_A: float, x_star_N: float) -> np.ndarray:
    """Risk ratio with the covariate pinned to reference values for every
    year while keeping the year-specific effects."""
    T = draw.n_years
    covs_star = CovariateSeries(np.full(T, float(x_star_A)), np.full(T, float(x_star_N)))
    return risk_ratio(draw, covs_star)


# ---------------------------------------------------------------------------
# Vectorized series over all draws
# ---------------------------------------------------------------------------


def _probs_all(draws: PosteriorDraws, x: np.ndarray, k: str) -> np.ndarray:
    """(S, T) yearly probabilities for one scenario across all draws."""
    beta = draws.beta_A if scenario_index(k) == 0 else draws.beta_N
    base = beta[:, :1] + beta[:, 1:] * x[None, :] + draws.alpha
    if scenario_index(k) == 0:
        base = base + draws.delta
    return expit(base[:, :, None] + draws.gamma[:, None, :]).mean(axis=2)


def _rr_all(draws: PosteriorDraws, x_A: np.ndarray, x_N: np.ndarray) -> np.ndarray:
    return _probs_all(draws, x_A, "A") / _probs_all(draws, x_N, "N")


def _series(values: np.ndarray, years, quantity, levels) -> RiskSeries:
    lo, hi = levels
    q = np.quantile(values, [lo, 0.5, hi], axis=0)
    return RiskSeries(np.asarray(years), q[1], q[0], q[2], quantity)


def probability_series(draws: PosteriorDraws, covs: CovariateSeries, k: str,
                       levels=DEFAULT_LEVELS) -> RiskSeries:
    tag = "prob_A" if scenario_index(k) == 0 else "prob_N"
    return _series(_probs_all(draws, covs.x(k), k), draws.years, tag, levels)


def risk_ratio_series(draws: PosteriorDraws, covs: CovariateSeries,
                      levels=DEFAULT_LEVELS) -> RiskSeries:
    return _series(_rr_all(draws, covs.x_A, covs.x_N), draws.years, "risk_ratio", levels)


def adjusted_risk_ratio_series(draws: PosteriorDraws, x_star_A: float, x_star_N: float,
                               levels=DEFAULT_LEVELS) -> RiskSeries:
    T = draws.years.shape[0]
    xa = np.full(T, float(x_star_A))
    xn = np.full(T, float(x_star_N))
    return _series(_rr_all(draws, xa, xn), draws.years, "adjusted_risk_ratio", levels)


def reference_covariates(covs: CovariateSeries, window: int = 5) -> tuple[float, float]:
    """Mean covariate over the last ``window`` years, per scenario."""
    if not (1 <= window <= covs.n_years):
        raise ValueError("reference window must fit inside the series")
    return float(covs.x_A[-window:].mean()), float(covs.x_N[-window:].mean())


# ---------------------------------------------------------------------------
# Exceedance diagnostic
# ---------------------------------------------------------------------------


def classify(pi_lower: float, pi_upper: float) -> int:
    """Three-way robustness category from an interval estimate of pi.

    3: the interval lies inside [0, 0.05) or inside (0.95, 1] - conclusions
       do not vary across years relative to the threshold;
    1: the interval lies inside [0.05, 0.95] - conclusions do vary;
    2: anything straddling the boundaries - inconclusive.
    """
    if not (0.0 <= pi_lower <= pi_upper <= 1.0):
        raise ValueError("need 0 <= lower <= upper <= 1")
    if pi_upper < 0.05 or pi_lower > 0.95:
        return 3
    if pi_lower >= 0.05 and pi_upper <= 0.95:
        return 1
    return 2


def _criterion_fraction(rr: np.ndarray, cutoff, direction: str) -> np.ndarray:
    """Per-draw fraction of years meeting the criterion (ties count against)."""
    if direction == "greater":
        hit = rr > float(cutoff[0])
    elif direction == "less":
        hit = rr < float(cutoff[0])
    elif direction == "between":
        c1, c2 = (float(c) for c in cutoff)
        if not c1 < c2:
            raise ValueError("between-cutoffs must be ordered low < high")
        hit = (rr > c1) & (rr < c2)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return hit.mean(axis=1)


def exceedance_pi(draws: PosteriorDraws, x_star_A: float, x_star_N: float,
                  cutoff, direction: str = "greater",
                  levels=DEFAULT_LEVELS) -> PiEstimate:
    """Posterior of the fraction of years whose adjusted risk ratio meets the
    cutoff criterion, with the three-way classification applied to the
    interval estimate.
    """
    cut = tuple(np.atleast_1d(np.asarray(cutoff, dtype=np.float64)))
    if direction == "between":
        if len(cut) != 2:
            raise ValueError("direction 'between' needs exactly two cutoffs")
    elif len(cut) != 1:
        raise ValueError(f"direction {direction!r} takes a single cutoff")
    if any(c <= 0 for c in cut):
        raise ValueError("cutoffs must be positive")
    T = draws.years.shape[0]
    rr = _rr_all(draws, np.full(T, float(x_star_A)), np.full(T, float(x_star_N)))
    frac = _criterion_fraction(rr, cut, direction)
    lo, hi = levels
    qlo, med, qhi = np.quantile(frac, [lo, 0.5, hi])
    return PiEstimate(cut, direction, float(qlo), float(med), float(qhi),
                      classify(float(qlo), float(qhi)))


def sigma_summary(draws: PosteriorDraws, levels=DEFAULT_LEVELS) -> tuple[float, float, float]:
    """(median, lower, upper) posterior quantiles of sigma = sqrt(sigma2)."""
    if len(draws) == 0:
        raise ValueError("no retained draws")
    sig = np.sqrt(draws.sigma2)
    lo, hi = levels
    qlo, med, qhi = np.quantile(sig, [lo, 0.5, hi])
    return float(med), float(qlo), float(qhi)
