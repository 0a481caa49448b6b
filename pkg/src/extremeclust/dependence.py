"""Beta-binomial likelihood of pairwise joint-exceedance counts.

For an adjacent pair at distance ``d`` the latent extremal-dependence
coefficient is ``chi ~ Beta(alpha, beta)`` with ``alpha = beta / (exp(gamma d) - 1)``,
so that ``E[chi] = exp(-gamma d)``. Pairs inside cluster ``j`` use
``gamma_j = gamma0 * exp(-epsilon_j)``, pairs straddling two clusters use
``gamma0``. Both orientations of a pair enter with weight 1/2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import kernels

log = logging.getLogger(__name__)


def gamma_from_epsilon(gamma0, epsilon):
    if not gamma0 > 0:
        raise ValueError("gamma0 must be positive")
    return np.exp(np.log(gamma0) - np.asarray(epsilon, dtype=float))


def bb_shape(gamma, d, beta):
    """Beta shapes ``(alpha, beta)`` whose mean is ``exp(-gamma * d)``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("adjacent pairs must have positive distance")
    alpha = beta / np.expm1(gamma * d)
    return (alpha if alpha.ndim else float(alpha)), beta


def log_binom(q, p):
    return gammaln(q + 1.0) - gammaln(p + 1.0) - gammaln(q - p + 1.0)


def betabinom_logpmf(p, q, alpha, beta):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p < 0) or np.any(p > q):
        raise ValueError("need 0 <= p <= q")
    out = (log_binom(q, p) + gammaln(p + alpha) + gammaln(q - p + beta) - gammaln(q + alpha + beta)
           + gammaln(alpha + beta) - gammaln(alpha) - gammaln(beta))
    out = np.where(q == 0, 0.0, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PairTable:
    """Unordered adjacent pairs with both orientations' counts, ready for the kernel.

    ``(p1, q1)`` are the counts of orientation ``(ii, jj)`` and ``(p2, q2)`` of
    ``(jj, ii)``. Pairs with ``Q = 0`` in both orientations carry no
    information and are dropped.
    """

    ii: np.ndarray
    jj: np.ndarray
    d: np.ndarray
    p1: np.ndarray
    q1: np.ndarray
    p2: np.ndarray
    q2: np.ndarray
    lc1: np.ndarray
    lc2: np.ndarray

    @classmethod
    def build(cls, counts, distances):
        cd = counts.as_dict()
        rows = []
        for (a, b), (p, q) in sorted(cd.items()):
            if a > b:
                continue
            p2, q2 = cd[(b, a)]
            if q == 0 and q2 == 0:
                log.warning("pair (%d,%d) has Q = 0 in both orientations; dropped", a + 1, b + 1)
                continue
            rows.append((a, b, distances[a, b], p, q, p2, q2))
        if rows:
            r = np.array(rows, dtype=float)
        else:
            r = np.empty((0, 7))
        if np.any(r[:, 2] <= 0):
            raise ValueError("adjacent pairs must have positive distance")
        c = np.ascontiguousarray
        return cls(ii=c(r[:, 0].astype(np.int64)), jj=c(r[:, 1].astype(np.int64)), d=c(r[:, 2]),
                   p1=c(r[:, 3]), q1=c(r[:, 4]), p2=c(r[:, 5]), q2=c(r[:, 6]),
                   lc1=c(log_binom(r[:, 4], r[:, 3])), lc2=c(log_binom(r[:, 6], r[:, 5])))

    def __len__(self):
        return self.ii.shape[0]

    def subset(self, mask):
        """Table restricted to the rows where ``mask`` is True."""
        return PairTable(*(np.ascontiguousarray(getattr(self, f)[mask]) for f in
                           ("ii", "jj", "d", "p1", "q1", "p2", "q2", "lc1", "lc2")))


def _log_gamma(gamma0, epsilon):
    return np.ascontiguousarray(np.log(gamma0) - np.asarray(epsilon, dtype=float))


def table_loglik(table, labels, gamma0, epsilon, beta):
    """Dependence log-likelihood over the rows of a :class:`PairTable`."""
    if not (gamma0 > 0 and beta > 0):
        return -np.inf
    return kernels.dep_loglik(table.ii, table.jj, table.d, table.p1, table.q1, table.p2, table.q2,
                              table.lc1, table.lc2, np.ascontiguousarray(labels, dtype=np.int64),
                              _log_gamma(gamma0, epsilon), float(np.log(gamma0)), float(beta))


def pair_loglik(k, k2, counts, state, d):
    """Half-weighted sum of both orientations' beta-binomial log-pmfs for one pair."""
    cd = counts.as_dict()
    if (k, k2) not in cd or (k2, k) not in cd:
        raise KeyError(f"no counts for pair ({k + 1},{k2 + 1})")
    a, b = state.labels[k], state.labels[k2]
    gamma = state.gamma[a] if a == b else state.gamma0
    alpha, beta = bb_shape(gamma, d, state.beta)
    total = 0.0
    for key in ((k, k2), (k2, k)):
        p, q = cd[key]
        if q > 0:
            total += 0.5 * betabinom_logpmf(p, q, alpha, beta)
    return total


def loglik_dep(state, counts, data):
    table = PairTable.build(counts, data.distances)
    return table_loglik(table, state.labels, state.gamma0, state.epsilon, state.beta)
