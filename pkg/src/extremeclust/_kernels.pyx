# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the sampler.

Same signatures and arithmetic as :mod:`extremeclust._kernels_py`; only the
summation order differs, so results agree to a few ULP.
"""
import numpy as np

from libc.math cimport exp, expm1, fabs, INFINITY, lgamma, log, log1p

cdef double XI_TOL = 1e-6
cdef double LOG_ALPHA_MAX = 700.0


def gpd_loglik(const double[::1] y, double sigma, double xi):
    cdef Py_ssize_t i, n = y.shape[0]
    cdef double z, w, c, s = 0.0
    if sigma <= 0.0:
        return -INFINITY
    if fabs(xi) < XI_TOL:
        for i in range(n):
            z = y[i] / sigma
            s -= z + xi * (z - 0.5 * z * z) + xi * xi * (z * z * z / 3.0 - 0.5 * z * z)
    else:
        c = 1.0 + 1.0 / xi
        for i in range(n):
            w = xi * y[i] / sigma
            if w <= -1.0:
                return -INFINITY
            s -= c * log1p(w)
    return s - n * log(sigma)


cdef inline double _log_expm1(double x) nogil:
    if x > 30.0:
        return x + log1p(-exp(-x))
    return log(expm1(x))


def dep_loglik(const long[::1] ii, const long[::1] jj, const double[::1] d,
               const double[::1] p1, const double[::1] q1,
               const double[::1] p2, const double[::1] q2,
               const double[::1] lc1, const double[::1] lc2,
               const long[::1] labels, const double[::1] log_gamma,
               double log_gamma0, double beta):
    # per orientation: lc + lgB(p + a, q - p + b) - lgB(a, b), with
    # lgamma(p + a) - lgamma(a) written as lgamma(p + a) - lgamma(1 + a) + log a
    cdef Py_ssize_t e, n = ii.shape[0]
    cdef long a, b
    cdef double lg, la, alpha, lab, l1a, t, total = 0.0
    cdef double log_beta, lgb
    if beta <= 0.0:
        return -INFINITY
    log_beta = log(beta)
    lgb = lgamma(beta)
    for e in range(n):
        a = labels[ii[e]]
        b = labels[jj[e]]
        if a == b:
            lg = log_gamma[a]
        else:
            lg = log_gamma0
        la = log_beta - _log_expm1(exp(lg) * d[e])
        if la > LOG_ALPHA_MAX:
            la = LOG_ALPHA_MAX
        alpha = exp(la)
        lab = lgamma(alpha + beta)
        l1a = lgamma(1.0 + alpha)
        t = 0.0
        if q1[e] > 0.0:
            t += lc1[e] + lgamma(q1[e] - p1[e] + beta) - lgb + lab - lgamma(q1[e] + alpha + beta)
            if p1[e] > 0.0:
                t += lgamma(p1[e] + alpha) - l1a + la
        if q2[e] > 0.0:
            t += lc2[e] + lgamma(q2[e] - p2[e] + beta) - lgb + lab - lgamma(q2[e] + alpha + beta)
            if p2[e] > 0.0:
                t += lgamma(p2[e] + alpha) - l1a + la
        total += 0.5 * t
    return total


def assign_labels(const double[:, ::1] dist, const long[::1] centres):
    cdef Py_ssize_t k, j, K = dist.shape[0], J = centres.shape[0]
    cdef double best, v
    cdef long bj
    out = np.empty(K, dtype=np.int64)
    cdef long[::1] z = out
    for k in range(K):
        best = dist[k, centres[0]]
        bj = 0
        for j in range(1, J):
            v = dist[k, centres[j]]
            if v < best:
                best = v
                bj = j
        z[k] = bj
    return out


def log1p_sum(const double[::1] y, double t):
    cdef Py_ssize_t i, n = y.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += log1p(t * y[i])
    return s
