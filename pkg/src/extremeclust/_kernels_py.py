"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from scipy.special import gammaln

XI_TOL = 1e-6
LOG_ALPHA_MAX = 700.0


def gpd_loglik(y, sigma, xi):
    if sigma <= 0.0:
        return -np.inf
    z = y / sigma
    if abs(xi) < XI_TOL:
        s = -np.sum(z + xi * (z - 0.5 * z * z) + xi * xi * (z * z * z / 3.0 - 0.5 * z * z))
    else:
        w = xi * z
        if w.size and w.min() <= -1.0:
            return -np.inf
        s = -(1.0 + 1.0 / xi) * np.sum(np.log1p(w))
    return float(s - y.shape[0] * np.log(sigma))


def _log_expm1(x):
    big = x > 30.0
    out = np.empty_like(x)
    out[big] = x[big] + np.log1p(-np.exp(-x[big]))
    out[~big] = np.log(np.expm1(x[~big]))
    return out


def _bb_terms(p, q, lc, la, alpha, beta):
    out = (lc + gammaln(q - p + beta) - gammaln(beta)
           + gammaln(alpha + beta) - gammaln(q + alpha + beta))
    pos = p > 0
    out = out + np.where(pos, gammaln(p + alpha) - gammaln(1.0 + alpha) + la, 0.0)
    return np.where(q > 0, out, 0.0)


def dep_loglik(ii, jj, d, p1, q1, p2, q2, lc1, lc2, labels, log_gamma, log_gamma0, beta):
    if beta <= 0.0:
        return -np.inf
    if ii.shape[0] == 0:
        return 0.0
    a = labels[ii]
    b = labels[jj]
    lg = np.where(a == b, log_gamma[a], log_gamma0)
    la = np.minimum(np.log(beta) - _log_expm1(np.exp(lg) * d), LOG_ALPHA_MAX)
    alpha = np.exp(la)
    terms = 0.5 * (_bb_terms(p1, q1, lc1, la, alpha, beta) + _bb_terms(p2, q2, lc2, la, alpha, beta))
    return float(np.sum(terms))


def assign_labels(dist, centres):
    # argmin returns the first minimum, i.e. the lowest cluster index on ties
    return np.argmin(dist[:, centres], axis=1).astype(np.int64)


def log1p_sum(y, t):
    return float(np.sum(np.log1p(t * y)))
