# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: binomial log-likelihood sums over count panels.

Same contract as the pure-NumPy twin in attrisk._core_py. The log binomial
coefficients are excluded (they cancel in Metropolis-Hastings ratios); a
predictor at or beyond the logit bound returns -inf.
"""
from libc.math cimport exp, fabs, log1p, INFINITY

BACKEND = "compiled"


cdef inline double softplus(double x) noexcept nogil:
    # log(1 + e^x) without overflow
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


def bin_loglik_block(const long[:, ::1] z, const long[::1] n,
                     const double[::1] base, const double[::1] gamma,
                     double bound):
    cdef Py_ssize_t T = base.shape[0]
    cdef Py_ssize_t J = gamma.shape[0]
    cdef Py_ssize_t t, j
    cdef double acc = 0.0
    cdef double pred
    with nogil:
        for t in range(T):
            for j in range(J):
                pred = base[t] + gamma[j]
                if fabs(pred) >= bound:
                    acc = -INFINITY
                    break
                acc += z[t, j] * pred - n[t] * softplus(pred)
            if acc == -INFINITY:
                break
    return acc


def bin_loglik_year(const long[::1] zA, const long[::1] zN, long n,
                    double baseA, double baseN, const double[::1] gamma,
                    double bound):
    cdef Py_ssize_t J = gamma.shape[0]
    cdef Py_ssize_t j
    cdef double acc = 0.0
    cdef double pa, pn
    with nogil:
        for j in range(J):
            pa = baseA + gamma[j]
            pn = baseN + gamma[j]
            if fabs(pa) >= bound or fabs(pn) >= bound:
                acc = -INFINITY
                break
            acc += zA[j] * pa - n * softplus(pa)
            acc += zN[j] * pn - n * softplus(pn)
    return acc


def bin_loglik_panel(const long[:, ::1] zA, const long[:, ::1] zN,
                     const long[::1] n, const double[::1] baseA,
                     const double[::1] baseN, const double[::1] gamma,
                     double bound):
    cdef double a = bin_loglik_block(zA, n, baseA, gamma, bound)
    if a == -INFINITY:
        return a
    return a + bin_loglik_block(zN, n, baseN, gamma, bound)
