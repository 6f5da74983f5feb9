"""Population-percentile confidence intervals for single-year studies.

Given a log risk-ratio estimate from a one-year study, its sampling
variance, and an externally estimated between-year variance component, the
interval for the p-th percentile of the all-years population distribution is

    xi_hat + (c_p -/+ z) * sqrt(sampling_var + sigma2)

with c_p the standard-normal p-quantile and z the two-sided critical value
of the requested confidence level. The two variance components are treated
as known.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import ndtri

VERDICT_ABOVE = "robust_above_1"
VERDICT_BELOW = "robust_below_1"
VERDICT_NONE = "not_robust"


@dataclass(frozen=True)
class StudyInput:
    """Inputs of a single-year robustness check.

    xi_hat        log risk-ratio point estimate
    sampling_var  sampling variance of xi_hat (already divided by the
                  ensemble size)
    sigma2        between-year (ocean-variability) variance component
    percentile_p  population percentile of interest
    confidence    two-sided confidence level of the interval
    """

    xi_hat: float
    sampling_var: float
    sigma2: float
    percentile_p: float = 0.05
    confidence: float = 0.95

    def __post_init__(self):
        if self.sampling_var <= 0:
            raise ValueError("sampling_var must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if not 0.0 < self.percentile_p < 1.0:
            raise ValueError("percentile_p must lie in (0, 1)")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")

    @property
    def total_sd(self) -> float:
        return math.sqrt(self.sampling_var + self.sigma2)


@dataclass(frozen=True)
class PhiInterval:
    lower: float        # log scale
    upper: float
    ratio_lower: float  # exponentiated
    ratio_upper: float


def interval_multipliers(percentile_p: float, confidence: float) -> tuple[float, float]:
    """(c_p - z, c_p + z) applied to the total standard deviation."""
    c_p = float(ndtri(percentile_p))
    z = float(ndtri(1.0 - (1.0 - confidence) / 2.0))
    return c_p - z, c_p + z


def phi_ci(inp: StudyInput) -> PhiInterval:
    """Confidence interval for the p-th population percentile of the log
    risk ratio (p = 0.5 gives the interval for the population mean)."""
    lo_m, up_m = interval_multipliers(inp.percentile_p, inp.confidence)
    s = inp.total_sd
    lower = inp.xi_hat + lo_m * s
    upper = inp.xi_hat + up_m * s
    return PhiInterval(lower, upper, math.exp(lower), math.exp(upper))


def phi_ci_sigma2_range(inp: StudyInput, sigma2_low: float, sigma2_high: float) -> PhiInterval:
    """Heuristic extension: widen the interval over a sigma2 credible range.

    Substitutes each endpoint of the supplied sigma2 interval and takes the
    union of the resulting intervals. This propagates sigma2 uncertainty
    only approximately and goes beyond the known-variance setting above.
    """
    if not 0.0 <= sigma2_low <= sigma2_high:
        raise ValueError("need 0 <= sigma2_low <= sigma2_high")
    cis = [
        phi_ci(StudyInput(inp.xi_hat, inp.sampling_var, s2, inp.percentile_p, inp.confidence))
        for s2 in (sigma2_low, sigma2_high)
    ]
    lower = min(ci.lower for ci in cis)
    upper = max(ci.upper for ci in cis)
    return PhiInterval(lower, upper, math.exp(lower), math.exp(upper))


def robustness_verdict(inp: StudyInput) -> str:
    """Is the single-year conclusion robust to between-year variability?

    ``robust_above_1`` when the percentile interval lies entirely above
    log(1) = 0, ``robust_below_1`` when entirely below, else
    ``not_robust``.
    """
    ci = phi_ci(inp)
    if ci.lower > 0.0:
        return VERDICT_ABOVE
    if ci.upper < 0.0:
        return VERDICT_BELOW
    return VERDICT_NONE
