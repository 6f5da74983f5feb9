"""Hierarchical Bayesian estimation of time-varying extreme-event risk
ratios from paired factual/counterfactual ensemble counts.

The package exposes the model kernels (:mod:`attrisk.model`), the
interweaving MCMC sampler (:mod:`attrisk.sampler`), posterior estimands
(:mod:`attrisk.analysis`), single-year robustness intervals
(:mod:`attrisk.single_year`), synthetic-data oracles
(:mod:`attrisk.synthetic`), file formats (:mod:`attrisk.dataio`) and a CLI
(``attrisk``).
"""

__version__ = "0.1.0"

from .model import (
    CountPanel,
    CovariateSeries,
    ParamState,
    PriorConfig,
    inv_logit,
    linear_predictor,
    log_likelihood,
    log_prior,
    logit,
)
from .sampler import (
    AugmentedLatents,
    PosteriorDraws,
    SamplerConfig,
    gibbs_beta,
    merge_draws,
    propose_gamma,
    run_sampler,
    rwmh_block,
    tune,
)
from .analysis import (
    PiEstimate,
    RiskSeries,
    adjusted_risk_ratio,
    approx_rr_decomposition,
    classify,
    exceedance_pi,
    risk_ratio,
    sigma_summary,
    yearly_probabilities,
)
from .single_year import StudyInput, phi_ci, robustness_verdict
from .synthetic import GeneratorSpec, generate_panel, grid_posterior_2d, sbc_run

__all__ = [
    "AugmentedLatents",
    "CountPanel",
    "CovariateSeries",
    "GeneratorSpec",
    "ParamState",
    "PiEstimate",
    "PosteriorDraws",
    "PriorConfig",
    "RiskSeries",
    "SamplerConfig",
    "StudyInput",
    "adjusted_risk_ratio",
    "approx_rr_decomposition",
    "classify",
    "exceedance_pi",
    "generate_panel",
    "gibbs_beta",
    "grid_posterior_2d",
    "inv_logit",
    "linear_predictor",
    "log_likelihood",
    "log_prior",
    "logit",
    "merge_draws",
    "phi_ci",
    "propose_gamma",
    "risk_ratio",
    "robustness_verdict",
    "run_sampler",
    "rwmh_block",
    "sbc_run",
    "sigma_summary",
    "tune",
    "yearly_probabilities",
]
