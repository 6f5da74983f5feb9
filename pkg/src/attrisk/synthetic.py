"""Synthetic data generation and brute-force reference computations.

Everything here exists to exercise and validate the estimation pipeline:
forward simulation from a known parameter state, dense-grid posteriors for
a reduced two-intercept model, and the simulation-based calibration (SBC)
harness with per-replicate seed splitting.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit
from scipy.stats import chisquare

from .model import (
    N_MONTHS,
    CountPanel,
    CovariateSeries,
    ParamState,
    PriorConfig,
    predictor_matrix,
)
from .sampler import PosteriorDraws, SamplerConfig, rwmh_block, run_sampler

ENSEMBLE_TIERS = (50, 100, 400)
_TIER_FRACTIONS = (15.0 / 32.0, 29.0 / 32.0)  # year-count split between tiers


def default_ensemble_schedule(T: int) -> np.ndarray:
    """Three-tier ensemble-size schedule (small early, large late), scaled to T years."""
    if T < 1:
        raise ValueError("need at least one year")
    idx = np.arange(T)
    sizes = np.full(T, ENSEMBLE_TIERS[0], dtype=np.int64)
    sizes[idx >= _TIER_FRACTIONS[0] * T] = ENSEMBLE_TIERS[1]
    sizes[idx >= _TIER_FRACTIONS[1] * T] = ENSEMBLE_TIERS[2]
    return sizes


@dataclass(frozen=True)
class GeneratorSpec:
    """Everything needed to simulate one count panel from known parameters."""

    years: np.ndarray
    ensemble_sizes: np.ndarray
    true_state: ParamState
    covariates: CovariateSeries
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "years", np.asarray(self.years, dtype=np.int64))
        object.__setattr__(self, "ensemble_sizes", np.asarray(self.ensemble_sizes, dtype=np.int64))
        T = self.years.shape[0]
        if T < 1:
            raise ValueError("need at least one year")
        if self.ensemble_sizes.shape != (T,) or np.any(self.ensemble_sizes < 1):
            raise ValueError("ensemble_sizes must be positive and match the years")
        if self.true_state.n_years != T or self.covariates.n_years != T:
            raise ValueError("true_state and covariates must match the years")


def generate_panel(spec: GeneratorSpec) -> CountPanel:
    """Draw counts cell-by-cell from the binomial model; deterministic per seed."""
    rng = np.random.Generator(np.random.Philox(spec.seed))
    n = spec.ensemble_sizes
    counts = np.empty((2, spec.years.shape[0], N_MONTHS), dtype=np.int64)
    for idx, k in enumerate(("A", "N")):
        p = expit(predictor_matrix(spec.true_state, spec.covariates, k))
        counts[idx] = rng.binomial(n[:, None], p)
    return CountPanel(spec.years, counts, n)


def sample_prior_state(rng, T: int, prior: PriorConfig) -> ParamState:
    """Draw a parameter state from the hierarchical prior.

    Variances come from U(var_lower, var_upper) for tau2/sigma2 and the
    half-Cauchy for omega2; gamma is an iid normal vector projected onto the
    sum-zero hyperplane, which is exactly the constrained prior.
    """
    tau2 = rng.uniform(prior.var_lower, prior.var_upper)
    sigma2 = rng.uniform(prior.var_lower, prior.var_upper)
    omega2 = prior.cauchy_scale * abs(rng.standard_cauchy())
    gamma = rng.normal(0.0, math.sqrt(omega2), N_MONTHS)
    gamma -= gamma.mean()
    gamma -= gamma.mean()
    return ParamState(
        alpha=rng.normal(0.0, math.sqrt(tau2), T),
        delta=rng.normal(0.0, math.sqrt(sigma2), T),
        gamma=gamma,
        beta_A=rng.normal(0.0, prior.beta_sd, 2),
        beta_N=rng.normal(0.0, prior.beta_sd, 2),
        tau2=tau2, sigma2=sigma2, omega2=omega2,
    )


# ---------------------------------------------------------------------------
# Dense-grid posterior for the reduced two-intercept model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridPosterior2D:
    """Normalized posterior of (beta_A0, beta_N0) on a square grid.

    All other parameters are frozen at the supplied base state, so the
    posterior factorizes across the two intercepts; marginals are stored
    explicitly. ``density`` integrates to one by the trapezoid rule.
    """

    axis: np.ndarray         # shared grid for both intercepts
    density: np.ndarray      # (R, R); rows index beta_A0
    marginal_A: np.ndarray
    marginal_N: np.ndarray

    def marginal(self, which: str) -> np.ndarray:
        return self.marginal_A if which == "A" else self.marginal_N

    def marginal_mean(self, which: str) -> float:
        pdf = self.marginal(which)
        return float(np.trapezoid(self.axis * pdf, self.axis))

    def marginal_sd(self, which: str) -> float:
        m = self.marginal_mean(which)
        pdf = self.marginal(which)
        return math.sqrt(float(np.trapezoid((self.axis - m) ** 2 * pdf, self.axis)))

    def marginal_cdf(self, which: str) -> np.ndarray:
        pdf = self.marginal(which)
        dx = np.diff(self.axis)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * dx * (pdf[1:] + pdf[:-1]))])
        return cdf / cdf[-1]

    def total_mass(self) -> float:
        inner = np.trapezoid(self.density, self.axis, axis=1)
        return float(np.trapezoid(inner, self.axis))


def grid_posterior_2d(panel: CountPanel, covs: CovariateSeries, prior: PriorConfig,
                      base_state: ParamState, lo: float, hi: float,
                      resolution: int = 400) -> GridPosterior2D:
    """Brute-force posterior of the two intercepts with all else frozen.

    The likelihood separates by scenario, so each axis needs only a 1-d
    sweep; the 2-d density is the outer product of the per-scenario factors.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if not lo < hi:
        raise ValueError("need lo < hi")
    axis = np.linspace(lo, hi, resolution)
    parts = {}
    for idx, k in enumerate(("A", "N")):
        pred0 = predictor_matrix(base_state, covs, k) - base_state.beta(k)[0]
        pred = axis[:, None, None] + pred0[None, :, :]           # (R, T, 12)
        z = panel.scenario_counts(k)[None, :, :]
        n = panel.ensemble_sizes[None, :, None]
        ll = np.sum(z * pred - n * np.logaddexp(0.0, pred), axis=(1, 2))
        ll += -0.5 * axis**2 / prior.beta_sd**2
        if prior.logit_bound is not None:
            bad = np.abs(pred).max(axis=(1, 2)) >= prior.logit_bound
            ll[bad] = -np.inf
        parts[k] = ll
    joint = parts["A"][:, None] + parts["N"][None, :]
    peak = joint.max()
    if not np.isfinite(peak):
        raise ValueError("posterior vanishes everywhere on the grid; widen the bounds")
    density = np.exp(joint - peak)
    mass = float(np.trapezoid(np.trapezoid(density, axis, axis=1), axis))
    density /= mass
    marg_A = np.trapezoid(density, axis, axis=1)
    marg_N = np.trapezoid(density, axis, axis=0)
    return GridPosterior2D(axis, density, marg_A, marg_N)


def sample_reduced_intercepts(panel: CountPanel, covs: CovariateSeries, prior: PriorConfig,
                              base_state: ParamState, n_keep: int, seed: int,
                              step_sds: tuple[float, float] = (0.5, 0.5),
                              thin: int = 1, burn_in: int = 500) -> np.ndarray:
    """Componentwise random-walk MCMC over the two intercepts only.

    Uses the generic Metropolis block primitive; serves as the sampling side
    of the grid-vs-MCMC cross-check. Returns an (n_keep, 2) array of
    (beta_A0, beta_N0) draws.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    bound = prior.logit_bound if prior.logit_bound is not None else math.inf

    pred0 = {}
    for k in ("A", "N"):
        pred0[k] = predictor_matrix(base_state, covs, k) - base_state.beta(k)[0]

    def target(k):
        z = panel.scenario_counts(k)
        n = panel.ensemble_sizes[:, None]
        off = pred0[k]

        def logpost(block):
            b0 = float(block[0])
            pred = b0 + off
            if np.abs(pred).max() >= bound:
                return -math.inf
            ll = float(np.sum(z * pred) - np.sum(n * np.logaddexp(0.0, pred)))
            return ll - 0.5 * b0**2 / prior.beta_sd**2

        return logpost

    targets = {k: target(k) for k in ("A", "N")}
    cur = {"A": np.array([base_state.beta_A[0]]), "N": np.array([base_state.beta_N[0]])}
    cov = {"A": np.array([[step_sds[0] ** 2]]), "N": np.array([[step_sds[1] ** 2]])}
    out = np.empty((n_keep, 2))
    kept = 0
    it = 0
    while kept < n_keep:
        for k in ("A", "N"):
            cur[k], _ = rwmh_block(cur[k], targets[k], cov[k], rng)
        it += 1
        if it > burn_in and (it - burn_in) % thin == 0:
            out[kept, 0] = cur["A"][0]
            out[kept, 1] = cur["N"][0]
            kept += 1
    return out


def ks_distance_to_grid(samples: np.ndarray, axis: np.ndarray, cdf: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance between draws and a gridded CDF."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    F = np.interp(xs, axis, cdf, left=0.0, right=1.0)
    n = xs.size
    emp_hi = np.arange(1, n + 1) / n
    emp_lo = np.arange(0, n) / n
    return float(np.max(np.maximum(np.abs(F - emp_hi), np.abs(F - emp_lo))))


# ---------------------------------------------------------------------------
# Simulation-based calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SbcResult:
    ranks: dict            # parameter name -> (replicates,) int array
    n_draws: int           # retained draws per replicate (ranks run 0..n_draws)
    replicates: int


def _sbc_replicate(args):
    (seed_pair, T, years, sizes, covs_arrays, prior, config, track, ablate) = args
    truth_seed, chain_seed = seed_pair
    covs = CovariateSeries(covs_arrays[0], covs_arrays[1], standardized=bool(covs_arrays[2]))
    rng = np.random.Generator(np.random.Philox(truth_seed))
    truth = sample_prior_state(rng, T, prior)
    spec = GeneratorSpec(years, sizes, truth, covs, seed=int(rng.integers(2**63 - 1)))
    panel = generate_panel(spec)
    cfg = replace(config, seed=chain_seed)
    draws = run_sampler(panel, covs, prior, cfg, skip_beta_gibbs=ablate)
    out = {}
    for name in track:
        true_val = _component_of_state(truth, name)
        out[name] = int(np.sum(draws.component(name) < true_val))
    return out, len(draws)


def _component_of_state(state: ParamState, name: str) -> float:
    if name in ("tau2", "sigma2", "omega2"):
        return float(getattr(state, name))
    for prefix, arr in (("beta_A", state.beta_A), ("beta_N", state.beta_N),
                        ("alpha", state.alpha), ("delta", state.delta), ("gamma", state.gamma)):
        if name.startswith(prefix):
            return float(arr[int(name[len(prefix):])])
    raise KeyError(name)


def sbc_run(T: int, ensemble_sizes, covariates: CovariateSeries, prior: PriorConfig,
            config: SamplerConfig, replicates: int, master_seed: int,
            track=("beta_A1", "tau2", "sigma2"), ablate_beta_gibbs: bool = False,
            n_jobs: int = 1) -> SbcResult:
    """Rank-statistic harness for sampler validation.

    Per replicate: draw a truth state from the prior, simulate a panel, run
    the sampler, and record the rank of each tracked component among the
    retained draws. Replicate seeds are split from the master seed with
    ``numpy.random.SeedSequence.spawn``, so results are independent of
    ``n_jobs``. With a correct sampler the ranks are uniform on
    {0, ..., n_draws}.
    """
    if replicates < 20:
        raise ValueError("need at least 20 replicates for a meaningful rank histogram")
    years = np.arange(2000, 2000 + T)
    sizes = np.asarray(ensemble_sizes, dtype=np.int64)
    if sizes.ndim == 0:
        sizes = np.full(T, int(sizes), dtype=np.int64)
    seeds = np.random.SeedSequence(master_seed).spawn(replicates)
    jobs = []
    for ss in seeds:
        truth_seed, chain_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        jobs.append(((truth_seed, chain_seed), T, years, sizes,
                     (covariates.x_A, covariates.x_N, covariates.standardized),
                     prior, config, tuple(track), ablate_beta_gibbs))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_sbc_replicate, jobs))
    else:
        results = [_sbc_replicate(job) for job in jobs]
    n_draws = results[0][1]
    ranks = {name: np.array([r[0][name] for r in results], dtype=np.int64) for name in track}
    return SbcResult(ranks, n_draws, replicates)


def rank_uniformity_pvalue(ranks: np.ndarray, n_draws: int, bins: int = 20) -> float:
    """Chi-squared goodness-of-fit p-value of ranks against uniformity."""
    if (n_draws + 1) % bins != 0:
        raise ValueError("bins must divide the number of possible ranks (n_draws + 1)")
    width = (n_draws + 1) // bins
    counts = np.bincount(np.asarray(ranks) // width, minlength=bins)
    return float(chisquare(counts).pvalue)
