"""Pure-NumPy twin of the compiled hot kernels (attrisk._core).

Both backends expose the same three functions and exclude the parameter-free
log binomial coefficients; the sampler only ever needs likelihood
differences. A predictor at or beyond the logit bound short-circuits to
``-inf`` (pass ``math.inf`` to disable the bound).
"""
import numpy as np

BACKEND = "numpy"


def bin_loglik_block(z, n, base, gamma, bound):
    """Sum of z*x - n*softplus(x) over a (T, 12) scenario block.

    x[t, j] = base[t] + gamma[j]; returns -inf when any |x| >= bound.
    """
    pred = base[:, None] + gamma[None, :]
    if np.abs(pred).max() >= bound:
        return float("-inf")
    return float(np.sum(z * pred) - np.sum(n[:, None] * np.logaddexp(0.0, pred)))


def bin_loglik_year(zA, zN, n, baseA, baseN, gamma, bound):
    """Both-scenario log-likelihood of a single year (24 cells)."""
    predA = baseA + gamma
    predN = baseN + gamma
    if max(np.abs(predA).max(), np.abs(predN).max()) >= bound:
        return float("-inf")
    out = float(zA @ predA - n * np.sum(np.logaddexp(0.0, predA)))
    out += float(zN @ predN - n * np.sum(np.logaddexp(0.0, predN)))
    return out


def bin_loglik_panel(zA, zN, n, baseA, baseN, gamma, bound):
    """Full-panel log-likelihood (both scenario blocks)."""
    a = bin_loglik_block(zA, n, baseA, gamma, bound)
    if a == float("-inf"):
        return a
    b = bin_loglik_block(zN, n, baseN, gamma, bound)
    return a + b
