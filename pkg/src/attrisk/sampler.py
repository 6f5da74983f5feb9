"""Interweaving MCMC sampler for the hierarchical binomial-logit model.

One iteration cycles through:

1. blocked random-walk Metropolis on each yearly-effect pair
   (alpha_t, delta_t), with a negatively correlated bivariate proposal;
2. random-walk Metropolis on each monthly effect gamma_j, where the
   perturbed vector is re-centered to the sum-zero hyperplane and accepted
   or rejected as a whole;
3. (A) blocked random-walk Metropolis on the regression pairs beta_A and
   beta_N, then (S) a conjugate Gibbs redraw of both pairs holding the
   per-year latents eta_t (counterfactual) and nu_t (factual) fixed,
   followed by back-solving alpha and delta;
4. (A) random-walk Metropolis on tau2 and sigma2 holding the standardized
   effects kappa = alpha/tau and xi = delta/sigma fixed, then (S) the same
   on tau2 | alpha and sigma2 | delta;
5. random-walk Metropolis on omega2 | gamma.

Variance parameters are updated on the log scale with the Jacobian
included. Proposal step sizes are tuned before the main run by a fixed
multiplicative rule targeting acceptance rates in (0.3, 0.4); the tuned
state warm-starts the main run and tuning shares the chain's random
stream. Chains are driven by a counter-based Philox stream, so results are
bit-reproducible for a given seed and backend.

Note on step 3(S): the latents eta_t and nu_t share the yearly effect
alpha_t, so cov(eta_t, nu_t) = tau2 and the exact conjugate update draws
(beta_A, beta_N) jointly from the resulting 4-dimensional Gaussian.
Updating each pair from its marginal regression alone (nu on x_A with
variance tau2 + sigma2, eta on x_N with variance tau2) is not invariant
for the posterior: it inflates the delta variance and biases sigma2
upward. The joint draw is used here; the marginal update is available as
:func:`gibbs_beta` and is exact whenever its own regression model is the
target.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from . import kernels
from .model import (
    N_MONTHS,
    GAMMA_SUM_TOL,
    CountPanel,
    CovariateSeries,
    ParamState,
    PriorConfig,
    log_likelihood,
    log_prior,
    logit,
)

logger = logging.getLogger(__name__)

TUNE_FACTOR = math.exp(0.3)  # multiplicative step-size adjustment per cycle

#: scalar RWMH blocks, in iteration order after the per-year and per-month ones
_SCALAR_BLOCKS = ("beta_A", "beta_N", "tau2_anc", "sigma2_anc", "tau2_suf", "sigma2_suf", "omega2")


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length, tuning and proposal settings for one chain."""

    seed: int
    iterations: int = 10000
    burn_in: int = 0
    thin: int = 1
    tune_cycles: int = 6
    tune_iterations: tuple[int, ...] = (400, 400, 400, 800, 800, 800)
    target_accept: tuple[float, float] = (0.3, 0.4)
    prop_corr_alpha_delta: float = -0.98
    prop_corr_beta_A: float = 0.0
    prop_corr_beta_N: float = 0.0
    step_alpha_delta: float = 0.5
    step_gamma: float = 0.5
    step_beta: float = 0.3
    step_logvar: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (0 <= self.burn_in < self.iterations):
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.tune_cycles < 0:
            raise ValueError("tune_cycles must be >= 0")
        object.__setattr__(self, "tune_iterations", tuple(int(v) for v in self.tune_iterations))
        if len(self.tune_iterations) != self.tune_cycles:
            raise ValueError("tune_iterations must list one length per tuning cycle")
        if any(v < 1 for v in self.tune_iterations):
            raise ValueError("tuning cycle lengths must be >= 1")
        lo, up = self.target_accept
        if not (0.0 < lo < up < 1.0):
            raise ValueError("target acceptance band must satisfy 0 < lower < upper < 1")
        for name in ("prop_corr_alpha_delta", "prop_corr_beta_A", "prop_corr_beta_N"):
            if not abs(getattr(self, name)) < 1.0:
                raise ValueError(f"{name} must lie in (-1, 1)")
        for name in ("step_alpha_delta", "step_gamma", "step_beta", "step_logvar"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_keep(self) -> int:
        return (self.iterations - self.burn_in) // self.thin + 1


@dataclass(frozen=True)
class AugmentedLatents:
    """Per-year latent recodings used by the interweaving steps."""

    eta: np.ndarray    # x_N' beta_N + alpha
    nu: np.ndarray     # x_A' beta_A + alpha + delta
    kappa: np.ndarray  # alpha / tau
    xi: np.ndarray     # delta / sigma

    @classmethod
    def from_state(cls, state: ParamState, covs: CovariateSeries) -> "AugmentedLatents":
        eta = state.beta_N[0] + state.beta_N[1] * covs.x_N + state.alpha
        nu = state.beta_A[0] + state.beta_A[1] * covs.x_A + state.alpha + state.delta
        return cls(eta, nu, state.alpha / math.sqrt(state.tau2), state.delta / math.sqrt(state.sigma2))

    def max_reconstruction_error(self, state: ParamState, covs: CovariateSeries) -> float:
        """Largest deviation of the identities defining the latents."""
        errs = [
            np.abs(self.eta - (state.beta_N[0] + state.beta_N[1] * covs.x_N + state.alpha)).max(),
            np.abs(self.nu - (state.beta_A[0] + state.beta_A[1] * covs.x_A + state.alpha + state.delta)).max(),
            np.abs(self.kappa * math.sqrt(state.tau2) - state.alpha).max(),
            np.abs(self.xi * math.sqrt(state.sigma2) - state.delta).max(),
        ]
        return float(max(errs))


@dataclass
class PosteriorDraws:
    """Retained posterior samples (structure-of-arrays) plus run metadata."""

    years: np.ndarray
    alpha: np.ndarray    # (S, T)
    delta: np.ndarray    # (S, T)
    gamma: np.ndarray    # (S, 12)
    beta_A: np.ndarray   # (S, 2)
    beta_N: np.ndarray   # (S, 2)
    tau2: np.ndarray     # (S,)
    sigma2: np.ndarray   # (S,)
    omega2: np.ndarray   # (S,)
    acceptance_rates: dict
    proposal_sds: dict
    config: SamplerConfig
    prior: PriorConfig
    backend: str

    def __len__(self) -> int:
        return int(self.tau2.shape[0])

    def state(self, i: int) -> ParamState:
        return ParamState(
            self.alpha[i], self.delta[i], self.gamma[i],
            self.beta_A[i], self.beta_N[i],
            float(self.tau2[i]), float(self.sigma2[i]), float(self.omega2[i]),
        )

    def states(self):
        """Iterate over retained draws as ParamState objects."""
        for i in range(len(self)):
            yield self.state(i)

    def component(self, name: str) -> np.ndarray:
        """Scalar posterior component by name, e.g. 'beta_A1' or 'tau2'."""
        if name in ("tau2", "sigma2", "omega2"):
            return getattr(self, name)
        for prefix, arr in (("beta_A", self.beta_A), ("beta_N", self.beta_N),
                            ("alpha", self.alpha), ("delta", self.delta), ("gamma", self.gamma)):
            if name.startswith(prefix):
                idx = int(name[len(prefix):])
                return arr[:, idx]
        raise KeyError(name)


def merge_draws(chains: list[PosteriorDraws]) -> PosteriorDraws:
    """Concatenate retained draws from independent chains, in chain order.

    Acceptance rates keep a leading chain axis so no information is lost.
    """
    if not chains:
        raise ValueError("no chains to merge")
    first = chains[0]
    cat = {
        name: np.concatenate([getattr(c, name) for c in chains], axis=0)
        for name in ("alpha", "delta", "gamma", "beta_A", "beta_N", "tau2", "sigma2", "omega2")
    }
    rates = {
        key: np.stack([np.asarray(c.acceptance_rates[key]) for c in chains])
        for key in first.acceptance_rates
    }
    return PosteriorDraws(
        years=first.years, acceptance_rates=rates, proposal_sds=first.proposal_sds,
        config=first.config, prior=first.prior, backend=first.backend, **cat,
    )


# ---------------------------------------------------------------------------
# Reusable update primitives
# ---------------------------------------------------------------------------


def rwmh_block(current, log_target, proposal_cov, rng) -> tuple[np.ndarray, bool]:
    """One symmetric random-walk Metropolis step on a small block.

    ``log_target`` maps a block (1-d array) to a float; a non-finite value at
    the proposal counts as a rejection. Returns (new block, accepted).
    """
    cur = np.atleast_1d(np.asarray(current, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(proposal_cov, dtype=np.float64))
    if cov.shape != (cur.size, cur.size) or not np.allclose(cov, cov.T):
        raise ValueError("proposal covariance must be symmetric and match the block size")
    chol = np.linalg.cholesky(cov)  # raises LinAlgError unless positive-definite
    prop = cur + chol @ rng.standard_normal(cur.size)
    lt_cur = float(log_target(cur))
    lt_prop = float(log_target(prop))
    u = rng.uniform()
    if math.isfinite(lt_prop) and math.log(u) < lt_prop - lt_cur:
        return prop, True
    return cur.copy(), False


def propose_gamma(current_gamma: np.ndarray, j: int, step_sd: float, rng=None, *,
                  eps: float | None = None) -> np.ndarray:
    """Perturb component j and re-center the whole vector to sum zero.

    The perturbation is N(0, step_sd^2), drawn from ``rng`` unless a
    pre-drawn ``eps`` is supplied (the sampler batches its normal draws).
    """
    if abs(float(current_gamma.sum())) > GAMMA_SUM_TOL:
        raise ValueError("current gamma must sum to zero")
    if eps is None:
        eps = step_sd * rng.standard_normal()
    out = current_gamma.astype(np.float64, copy=True)
    out[j] += eps
    out -= out.sum() / out.size
    out -= out.sum() / out.size  # second projection clears the leftover rounding
    return out


def _draw_mvn_from_precision(precision: np.ndarray, lin: np.ndarray, rng) -> np.ndarray:
    """Draw from N(precision^-1 lin, precision^-1) via one Cholesky factor."""
    upper = cholesky(precision, lower=False, check_finite=False)
    mean = cho_solve((upper, False), lin, check_finite=False)
    return mean + solve_triangular(upper, rng.standard_normal(lin.size),
                                   lower=False, check_finite=False)


def gibbs_beta_moments(targets, covariate, variance, prior_sd):
    """Posterior mean and covariance of (intercept, slope) in the conjugate
    normal regression with known observation variance."""
    y = np.asarray(targets, dtype=np.float64)
    x = np.asarray(covariate, dtype=np.float64)
    if y.shape != x.shape or y.ndim != 1 or y.size < 2:
        raise ValueError("need matching 1-d targets and covariate with T >= 2")
    if variance <= 0 or prior_sd <= 0:
        raise ValueError("variance and prior_sd must be positive")
    X = np.column_stack([np.ones_like(x), x])
    precision = X.T @ X / variance + np.eye(2) / prior_sd**2
    cov = np.linalg.inv(precision)
    mean = cov @ (X.T @ y / variance)
    return mean, cov


def gibbs_beta(targets, covariate, variance, prior_sd, rng) -> np.ndarray:
    """Exact draw from the conjugate posterior of a two-coefficient linear
    regression with known observation variance and N(0, prior_sd^2) priors.
    """
    y = np.asarray(targets, dtype=np.float64)
    x = np.asarray(covariate, dtype=np.float64)
    if y.shape != x.shape or y.ndim != 1 or y.size < 2:
        raise ValueError("need matching 1-d targets and covariate with T >= 2")
    if variance <= 0 or prior_sd <= 0:
        raise ValueError("variance and prior_sd must be positive")
    X = np.column_stack([np.ones_like(x), x])
    precision = X.T @ X / variance + np.eye(2) / prior_sd**2
    return _draw_mvn_from_precision(precision, X.T @ y / variance, rng)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def initial_state(panel: CountPanel, covs: CovariateSeries, prior: PriorConfig) -> ParamState:
    """Deterministic starting point with a finite log posterior.

    Effects start at zero, intercepts at the logit of the pooled empirical
    event probability per scenario (continuity-corrected, clamped inside the
    logit bound when one is active), slopes at zero, variances at one.
    """
    T = panel.n_years
    total_trials = float(N_MONTHS * panel.ensemble_sizes.sum())
    intercepts = []
    for idx in range(2):
        p_hat = (float(panel.counts[idx].sum()) + 0.5) / (total_trials + 1.0)
        b0 = logit(p_hat)
        if prior.logit_bound is not None:
            L = prior.logit_bound
            if L <= 1.0:
                raise ValueError("logit bound too tight to initialize (need L > 1)")
            b0 = min(max(b0, -L + 1.0), L - 1.0)
        intercepts.append(b0)
    var0 = 1.0
    if not (prior.var_lower < var0 < prior.var_upper):
        var0 = 0.5 * (prior.var_lower + prior.var_upper)
    return ParamState(
        alpha=np.zeros(T), delta=np.zeros(T), gamma=np.zeros(N_MONTHS),
        beta_A=np.array([intercepts[0], 0.0]), beta_N=np.array([intercepts[1], 0.0]),
        tau2=var0, sigma2=var0, omega2=var0,
    )


# ---------------------------------------------------------------------------
# The chain
# ---------------------------------------------------------------------------


class _Counters:
    """Per-block acceptance bookkeeping."""

    def __init__(self, T: int):
        self.accepted = {"alpha_delta": np.zeros(T), "gamma": np.zeros(N_MONTHS)}
        self.total = {"alpha_delta": np.zeros(T), "gamma": np.zeros(N_MONTHS)}
        for name in _SCALAR_BLOCKS:
            self.accepted[name] = 0.0
            self.total[name] = 0.0

    def hit(self, block, idx, accepted):
        if idx is None:
            self.total[block] += 1.0
            if accepted:
                self.accepted[block] += 1.0
        else:
            self.total[block][idx] += 1.0
            if accepted:
                self.accepted[block][idx] += 1.0

    def rates(self) -> dict:
        out = {}
        for key, tot in self.total.items():
            acc = self.accepted[key]
            with np.errstate(invalid="ignore"):
                out[key] = np.asarray(acc) / np.asarray(tot) if np.ndim(tot) else (acc / tot if tot else 0.0)
        return out


class _Chain:
    def __init__(self, panel, covs, prior, config, kern, rng, skip_beta_gibbs=False):
        self.kern = kern
        self.rng = rng
        self.prior = prior
        self.config = config
        self.skip_beta_gibbs = skip_beta_gibbs
        self.T = panel.n_years
        self.zA = np.ascontiguousarray(panel.counts[0])
        self.zN = np.ascontiguousarray(panel.counts[1])
        self.n = np.ascontiguousarray(panel.ensemble_sizes)
        self.x_A = covs.x_A
        self.x_N = covs.x_N
        self.bound = float(prior.logit_bound) if prior.logit_bound is not None else math.inf
        self.var_lo = prior.var_lower
        self.var_up = prior.var_upper
        self.beta_var = prior.beta_sd**2
        self.cauchy_scale = prior.cauchy_scale

        st = initial_state(panel, covs, prior)
        self.alpha = st.alpha.copy()
        self.delta = st.delta.copy()
        self.gamma = st.gamma.copy()
        self.beta_A = st.beta_A.copy()
        self.beta_N = st.beta_N.copy()
        self.tau2 = st.tau2
        self.sigma2 = st.sigma2
        self.omega2 = st.omega2
        self.eta = self._recompute_eta()
        self.nu = self._recompute_nu()

        # proposal step sizes, tuned in place
        self.steps = {
            "alpha_delta": np.full(self.T, config.step_alpha_delta),
            "gamma": np.full(N_MONTHS, config.step_gamma),
            "beta_A": config.step_beta,
            "beta_N": config.step_beta,
            "tau2_anc": config.step_logvar,
            "sigma2_anc": config.step_logvar,
            "tau2_suf": config.step_logvar,
            "sigma2_suf": config.step_logvar,
            "omega2": config.step_logvar,
        }
        rho = config.prop_corr_alpha_delta
        self.chol_ad = np.array([[1.0, 0.0], [rho, math.sqrt(1.0 - rho * rho)]])
        self.chol_beta = {}
        for k, r in (("beta_A", config.prop_corr_beta_A), ("beta_N", config.prop_corr_beta_N)):
            self.chol_beta[k] = np.array([[1.0, 0.0], [r, math.sqrt(1.0 - r * r)]])

        # fixed pieces of the joint conjugate beta update: stack b = (beta_N, beta_A),
        # eta_t ~ N(U_t b, tau2), (nu - eta)_t ~ N(W_t b, sigma2) independently
        X_N = np.column_stack([np.ones(self.T), self.x_N])
        X_A = np.column_stack([np.ones(self.T), self.x_A])
        self.X_N, self.X_A = X_N, X_A
        self.U = np.hstack([X_N, np.zeros_like(X_N)])
        self.W = np.hstack([-X_N, X_A])
        self.GU = self.U.T @ self.U
        self.GW = self.W.T @ self.W

    # -- state helpers ----------------------------------------------------

    def _recompute_eta(self):
        return self.beta_N[0] + self.beta_N[1] * self.x_N + self.alpha

    def _recompute_nu(self):
        return self.beta_A[0] + self.beta_A[1] * self.x_A + self.alpha + self.delta

    def state(self) -> ParamState:
        return ParamState(
            self.alpha.copy(), self.delta.copy(), self.gamma.copy(),
            self.beta_A.copy(), self.beta_N.copy(), self.tau2, self.sigma2, self.omega2,
        )

    # -- iteration --------------------------------------------------------

    def iterate(self, acc: _Counters):
        self._step_year_effects(acc)
        self._step_gamma(acc)
        self._step_beta_rwmh(acc)
        if not self.skip_beta_gibbs:
            self._step_beta_gibbs()
        self._step_variances_ancillary(acc)
        self._step_variances_sufficient(acc)
        self._step_omega(acc)

    def _step_year_effects(self, acc):
        kern, rng = self.kern, self.rng
        steps = self.steps["alpha_delta"]
        bN0, bN1 = self.beta_N
        bA0, bA1 = self.beta_A
        dzs = (rng.standard_normal((self.T, 2)) @ self.chol_ad.T) * steps[:, None]
        us = rng.uniform(size=self.T)
        for t in range(self.T):
            dz = dzs[t]
            u = us[t]
            a_new = self.alpha[t] + dz[0]
            d_new = self.delta[t] + dz[1]
            eta_new = bN0 + bN1 * self.x_N[t] + a_new
            nu_new = bA0 + bA1 * self.x_A[t] + a_new + d_new
            cur = kern.bin_loglik_year(self.zA[t], self.zN[t], self.n[t],
                                       self.nu[t], self.eta[t], self.gamma, self.bound)
            new = kern.bin_loglik_year(self.zA[t], self.zN[t], self.n[t],
                                       nu_new, eta_new, self.gamma, self.bound)
            dlp = -0.5 * ((a_new**2 - self.alpha[t]**2) / self.tau2
                          + (d_new**2 - self.delta[t]**2) / self.sigma2)
            ok = new != -math.inf and math.log(u) < new - cur + dlp
            if ok:
                self.alpha[t] = a_new
                self.delta[t] = d_new
                self.eta[t] = eta_new
                self.nu[t] = nu_new
            acc.hit("alpha_delta", t, ok)

    def _step_gamma(self, acc):
        kern, rng = self.kern, self.rng
        steps = self.steps["gamma"]
        cur_ll = kern.bin_loglik_panel(self.zA, self.zN, self.n, self.nu, self.eta,
                                       self.gamma, self.bound)
        cur_sq = float(self.gamma @ self.gamma)
        epss = rng.standard_normal(N_MONTHS) * steps
        us = rng.uniform(size=N_MONTHS)
        for j in range(N_MONTHS):
            gam_new = propose_gamma(self.gamma, j, float(steps[j]), eps=float(epss[j]))
            u = us[j]
            new_ll = kern.bin_loglik_panel(self.zA, self.zN, self.n, self.nu, self.eta,
                                           gam_new, self.bound)
            new_sq = float(gam_new @ gam_new)
            dlp = -0.5 * (new_sq - cur_sq) / self.omega2
            ok = new_ll != -math.inf and math.log(u) < new_ll - cur_ll + dlp
            if ok:
                self.gamma = gam_new
                cur_ll = new_ll
                cur_sq = new_sq
            acc.hit("gamma", j, ok)

    def _step_beta_rwmh(self, acc):
        kern, rng = self.kern, self.rng
        for name, z, x in (("beta_A", self.zA, self.x_A), ("beta_N", self.zN, self.x_N)):
            beta = self.beta_A if name == "beta_A" else self.beta_N
            base = self.nu if name == "beta_A" else self.eta
            dz = self.chol_beta[name] @ rng.standard_normal(2) * self.steps[name]
            u = rng.uniform()
            beta_new = beta + dz
            base_new = base + dz[0] + dz[1] * x
            cur = kern.bin_loglik_block(z, self.n, base, self.gamma, self.bound)
            new = kern.bin_loglik_block(z, self.n, base_new, self.gamma, self.bound)
            dlp = -0.5 * (float(beta_new @ beta_new) - float(beta @ beta)) / self.beta_var
            ok = new != -math.inf and math.log(u) < new - cur + dlp
            if ok:
                if name == "beta_A":
                    self.beta_A = beta_new
                    self.nu = self._recompute_nu()
                else:
                    self.beta_N = beta_new
                    self.eta = self._recompute_eta()
            acc.hit(name, None, ok)

    def _step_beta_gibbs(self):
        # Joint conjugate draw of (beta_N, beta_A) given the latents, then
        # back-solve the yearly effects; eta and nu are unchanged.
        d = self.nu - self.eta
        precision = self.GU / self.tau2 + self.GW / self.sigma2 + np.eye(4) / self.beta_var
        lin = self.U.T @ self.eta / self.tau2 + self.W.T @ d / self.sigma2
        b = _draw_mvn_from_precision(precision, lin, self.rng)
        self.beta_N = b[:2]
        self.beta_A = b[2:]
        self.alpha = self.eta - self.X_N @ self.beta_N
        self.delta = self.nu - self.X_A @ self.beta_A - self.alpha

    def _step_variances_ancillary(self, acc):
        kern, rng = self.kern, self.rng
        kappa = self.alpha / math.sqrt(self.tau2)
        xi = self.delta / math.sqrt(self.sigma2)

        # tau2 | kappa, xi, ... : both scenario blocks move with alpha
        lt = math.log(self.tau2)
        lt_new = lt + rng.standard_normal() * self.steps["tau2_anc"]
        u = rng.uniform()
        tau2_new = math.exp(lt_new)
        ok = False
        if self.var_lo < tau2_new < self.var_up:
            alpha_new = math.sqrt(tau2_new) * kappa
            eta_new = self.beta_N[0] + self.beta_N[1] * self.x_N + alpha_new
            nu_new = self.beta_A[0] + self.beta_A[1] * self.x_A + alpha_new + self.delta
            cur = kern.bin_loglik_panel(self.zA, self.zN, self.n, self.nu, self.eta,
                                        self.gamma, self.bound)
            new = kern.bin_loglik_panel(self.zA, self.zN, self.n, nu_new, eta_new,
                                        self.gamma, self.bound)
            ok = new != -math.inf and math.log(u) < new - cur + (lt_new - lt)
            if ok:
                self.tau2 = tau2_new
                self.alpha = alpha_new
                self.eta = eta_new
                self.nu = nu_new
        acc.hit("tau2_anc", None, ok)

        # sigma2 | kappa, xi, ... : only the factual block moves with delta
        ls = math.log(self.sigma2)
        ls_new = ls + rng.standard_normal() * self.steps["sigma2_anc"]
        u = rng.uniform()
        sigma2_new = math.exp(ls_new)
        ok = False
        if self.var_lo < sigma2_new < self.var_up:
            delta_new = math.sqrt(sigma2_new) * xi
            nu_new = self.beta_A[0] + self.beta_A[1] * self.x_A + self.alpha + delta_new
            cur = kern.bin_loglik_block(self.zA, self.n, self.nu, self.gamma, self.bound)
            new = kern.bin_loglik_block(self.zA, self.n, nu_new, self.gamma, self.bound)
            ok = new != -math.inf and math.log(u) < new - cur + (ls_new - ls)
            if ok:
                self.sigma2 = sigma2_new
                self.delta = delta_new
                self.nu = nu_new
        acc.hit("sigma2_anc", None, ok)

    def _step_variances_sufficient(self, acc):
        rng = self.rng
        for name, vec in (("tau2_suf", self.alpha), ("sigma2_suf", self.delta)):
            cur_var = self.tau2 if name == "tau2_suf" else self.sigma2
            ssq = float(vec @ vec)
            lv = math.log(cur_var)
            lv_new = lv + rng.standard_normal() * self.steps[name]
            u = rng.uniform()
            var_new = math.exp(lv_new)
            ok = False
            if self.var_lo < var_new < self.var_up:
                diff = (-0.5 * self.T) * (lv_new - lv) - 0.5 * ssq * (1.0 / var_new - 1.0 / cur_var)
                ok = math.log(u) < diff + (lv_new - lv)
                if ok:
                    if name == "tau2_suf":
                        self.tau2 = var_new
                    else:
                        self.sigma2 = var_new
            acc.hit(name, None, ok)

    def _step_omega(self, acc):
        rng = self.rng
        ssq = float(self.gamma @ self.gamma)
        lw = math.log(self.omega2)
        lw_new = lw + rng.standard_normal() * self.steps["omega2"]
        u = rng.uniform()
        w_new = math.exp(lw_new)
        diff = (-0.5 * N_MONTHS) * (lw_new - lw) - 0.5 * ssq * (1.0 / w_new - 1.0 / self.omega2)
        diff += math.log1p((self.omega2 / self.cauchy_scale) ** 2) - math.log1p((w_new / self.cauchy_scale) ** 2)
        ok = math.log(u) < diff + (lw_new - lw)
        if ok:
            self.omega2 = w_new
        acc.hit("omega2", None, ok)

    # -- tuning -----------------------------------------------------------

    def tune(self) -> list[dict]:
        """Run the tuning cycles, adjusting step sizes between cycles.

        Returns the per-cycle acceptance-rate dictionaries. Blocks still
        outside the target band after the final cycle are logged, not fatal.
        """
        lo, up = self.config.target_accept
        history = []
        for n_iter in self.config.tune_iterations:
            counters = _Counters(self.T)
            for _ in range(n_iter):
                self.iterate(counters)
            rates = counters.rates()
            history.append(rates)
            for key, rate in rates.items():
                r = np.asarray(rate, dtype=np.float64)
                s = np.asarray(self.steps[key], dtype=np.float64)
                s = np.where(r > up, s * TUNE_FACTOR, s)
                s = np.where(r < lo, s / TUNE_FACTOR, s)
                self.steps[key] = s if np.ndim(self.steps[key]) else float(s)
        if history:
            for key, rate in history[-1].items():
                r = np.atleast_1d(np.asarray(rate, dtype=np.float64))
                bad = np.flatnonzero((r < lo) | (r > up))
                if bad.size:
                    logger.info("tuning left block %s outside (%.2f, %.2f): %s",
                                key, lo, up, np.round(r[bad], 3))
        return history


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def _check_inputs(panel, covs):
    if panel.n_years != covs.n_years:
        raise ValueError("panel and covariate series disagree on the number of years")


def tune(panel: CountPanel, covs: CovariateSeries, prior: PriorConfig,
         config: SamplerConfig, backend: str | None = None):
    """Run only the tuning protocol; returns (step sizes, warmed state, history)."""
    _check_inputs(panel, covs)
    kern = kernels.get_backend(backend)
    rng = np.random.Generator(np.random.Philox(config.seed))
    chain = _Chain(panel, covs, prior, config, kern, rng)
    history = chain.tune()
    return dict(chain.steps), chain.state(), history


def run_sampler(panel: CountPanel, covs: CovariateSeries, prior: PriorConfig,
                config: SamplerConfig, backend: str | None = None,
                skip_beta_gibbs: bool = False,
                check_invariants: bool = False) -> PosteriorDraws:
    """Tune, warm-start and run one chain; fully deterministic given the seed.

    ``skip_beta_gibbs`` disables the conjugate interweaving redraw of the
    regression pairs (step 3(S)). The chain remains a valid MCMC but mixes
    poorly; the calibration harness uses this as its negative control.
    ``check_invariants`` re-derives the latent caches from the stored state
    at every retention and asserts the sum-zero and support constraints;
    intended for tests.
    """
    _check_inputs(panel, covs)
    kern = kernels.get_backend(backend)
    rng = np.random.Generator(np.random.Philox(config.seed))
    chain = _Chain(panel, covs, prior, config, kern, rng, skip_beta_gibbs=skip_beta_gibbs)

    init = chain.state()
    ll0 = log_likelihood(init, panel, covs)
    lp0 = log_prior(init, prior, covs)
    if not math.isfinite(ll0 + lp0):
        which = "log-likelihood" if not math.isfinite(ll0) else "log-prior"
        raise RuntimeError(f"non-finite {which} at initialization")

    chain.tune()

    T = panel.n_years
    n_keep = config.n_keep
    out = {
        "alpha": np.empty((n_keep, T)), "delta": np.empty((n_keep, T)),
        "gamma": np.empty((n_keep, N_MONTHS)),
        "beta_A": np.empty((n_keep, 2)), "beta_N": np.empty((n_keep, 2)),
        "tau2": np.empty(n_keep), "sigma2": np.empty(n_keep), "omega2": np.empty(n_keep),
    }
    counters = _Counters(T)
    slot = 0

    def maybe_store(i):
        nonlocal slot
        if i >= config.burn_in and (i - config.burn_in) % config.thin == 0:
            out["alpha"][slot] = chain.alpha
            out["delta"][slot] = chain.delta
            out["gamma"][slot] = chain.gamma
            out["beta_A"][slot] = chain.beta_A
            out["beta_N"][slot] = chain.beta_N
            out["tau2"][slot] = chain.tau2
            out["sigma2"][slot] = chain.sigma2
            out["omega2"][slot] = chain.omega2
            if check_invariants:
                st = chain.state()
                lat = AugmentedLatents(chain.eta.copy(), chain.nu.copy(),
                                       chain.alpha / math.sqrt(chain.tau2),
                                       chain.delta / math.sqrt(chain.sigma2))
                err = lat.max_reconstruction_error(st, covs)
                assert err < 1e-10, f"latent reconstruction error {err}"
                assert abs(float(chain.gamma.sum())) < GAMMA_SUM_TOL
                assert prior.var_lower < chain.tau2 < prior.var_upper
                assert prior.var_lower < chain.sigma2 < prior.var_upper
            slot += 1

    maybe_store(0)
    for i in range(1, config.iterations + 1):
        chain.iterate(counters)
        maybe_store(i)
    assert slot == n_keep

    return PosteriorDraws(
        years=panel.years.copy(),
        acceptance_rates=counters.rates(),
        proposal_sds={k: (v.copy() if np.ndim(v) else v) for k, v in chain.steps.items()},
        config=config, prior=prior, backend=kern.BACKEND,
        **out,
    )


def acceptance_band_fraction(draws: PosteriorDraws, band=(0.2, 0.5)) -> float:
    """Fraction of RWMH blocks whose main-run acceptance lies in ``band``."""
    lo, up = band
    flat = []
    for rate in draws.acceptance_rates.values():
        flat.extend(np.atleast_1d(np.asarray(rate, dtype=np.float64)).ravel())
    flat = np.asarray(flat)
    return float(np.mean((flat >= lo) & (flat <= up)))
