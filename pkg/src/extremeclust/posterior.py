"""Summaries of a trace: co-clustering, VI point estimate, marginal and return-level estimates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rjmcmc import MoveConfig, run_chain

EXHAUSTIVE_MAX_PARTITIONS = 5000


def canonical(labels):
    """Relabel so clusters are numbered by first appearance (0, 1, ...)."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv].astype(np.int64)


def _labels(trace):
    if hasattr(trace, "label_matrix"):
        Z = trace.label_matrix()
    else:
        Z = np.asarray(trace, dtype=np.int64)
        if Z.ndim == 1:
            Z = Z[None, :]
    if Z.shape[0] == 0:
        raise ValueError("empty trace")
    return Z


def similarity_matrix(trace):
    Z = _labels(trace)
    S = np.zeros((Z.shape[1], Z.shape[1]))
    for z in Z:
        S += z[:, None] == z[None, :]
    return S / Z.shape[0]


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def vi_distance(a, b):
    """Variation of information between two labelings, in nats."""
    a = canonical(a)
    b = canonical(b)
    K = a.size
    if b.size != K:
        raise ValueError("partitions of different sets")
    joint = np.bincount(a * K + b)
    return 2 * _entropy(joint, K) - _entropy(np.bincount(a), K) - _entropy(np.bincount(b), K)


class _ExpectedVI:
    """Posterior expected VI of candidate partitions against weighted unique samples."""

    def __init__(self, Z):
        Zc = np.array([canonical(z) for z in Z])
        self.uniq, counts = np.unique(Zc, axis=0, return_counts=True)
        self.w = counts / counts.sum()
        self.U, self.K = self.uniq.shape
        K = self.K
        self.hb = np.array([_entropy(np.bincount(z), K) for z in self.uniq])
        self._rows = (np.arange(self.U) * K * K)[:, None]

    def __call__(self, c):
        K = self.K
        c = np.asarray(c, dtype=np.int64)
        codes = (c[None, :] * K + self.uniq + self._rows).ravel()
        n = np.bincount(codes, minlength=self.U * K * K).reshape(self.U, K * K) / K
        with np.errstate(divide="ignore", invalid="ignore"):
            hab = -np.sum(np.where(n > 0, n * np.log(n), 0.0), axis=1)
        ha = _entropy(np.bincount(c), K)
        return float(np.sum(self.w * (2 * hab - ha - self.hb)))


def set_partitions(K):
    """All set partitions of ``K`` items as restricted-growth label vectors."""
    if K == 0:
        return
    a = [0] * K

    def rec(i, m):
        if i == K:
            yield np.array(a, dtype=np.int64)
            return
        for v in range(m + 1):
            a[i] = v
            yield from rec(i + 1, max(m, v + 1))

    yield from rec(1, 1)


def bell(K):
    row = [1]
    for _ in range(K):
        new = [row[-1]]
        for x in row:
            new.append(new[-1] + x)
        row = new
    return row[0]


@dataclass(frozen=True)
class PartitionEstimate:
    labels: np.ndarray
    expected_vi: float

    @property
    def n_clusters(self):
        return int(self.labels.max()) + 1

    @property
    def clusters(self):
        return [np.flatnonzero(self.labels == j) for j in range(self.n_clusters)]


def point_estimate(trace, exhaustive=None):
    """Partition minimising the posterior expected variation of information.

    Candidates are every distinct sampled partition, followed by greedy
    single-site moves from the best one. When the number of set partitions of
    the sites is small (``exhaustive=None`` means at most 5000) all of them are
    scored instead, which makes the result exact.
    """
    Z = _labels(trace)
    f = _ExpectedVI(Z)
    K = f.K
    if exhaustive is None:
        exhaustive = bell(K) <= EXHAUSTIVE_MAX_PARTITIONS
    if exhaustive:
        best, best_v = None, np.inf
        for c in set_partitions(K):
            v = f(c)
            if v < best_v - 1e-12:
                best, best_v = c.copy(), v
        return PartitionEstimate(best, max(best_v, 0.0))
    scores = np.array([f(c) for c in f.uniq])
    i = int(np.argmin(scores))
    best, best_v = f.uniq[i].copy(), scores[i]
    improved = True
    while improved:
        improved = False
        cand_best, cand_v = None, best_v
        J = int(best.max()) + 1
        for k in range(K):
            for lab in range(J + 1):
                if lab == best[k]:
                    continue
                c = best.copy()
                c[k] = lab
                c = canonical(c)
                v = f(c)
                if v < cand_v - 1e-12:
                    cand_best, cand_v = c, v
        if cand_best is not None:
            best, best_v, improved = cand_best, cand_v, True
    return PartitionEstimate(canonical(best), max(best_v, 0.0))


@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    lo: float
    hi: float

    @property
    def width(self):
        return self.hi - self.lo


def summarize(values, level=0.9):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values to summarise")
    a = (1 - level) / 2
    lo, med, hi = np.quantile(v, [a, 0.5, 1 - a])
    return Summary(float(v.mean()), float(med), float(lo), float(hi))


def swmc(trace, k, functional="sigma", level=0.9):
    """Site-wise summary of ``functional`` evaluated at site ``k``'s cluster in every sample.

    ``functional`` is ``"sigma"``, ``"xi"`` or a callable ``f(sigma, xi)``.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    sig = np.array([s[z[k]] for s, z in zip(trace.sigma, trace.labels)])
    xi = np.array([x[z[k]] for x, z in zip(trace.xi, trace.labels)])
    if functional == "sigma":
        vals = sig
    elif functional == "xi":
        vals = xi
    else:
        vals = functional(sig, xi)
    return summarize(vals, level)


def posterior_J(trace):
    J = trace.J
    if J.size == 0:
        raise ValueError("empty trace")
    values, counts = np.unique(J, return_counts=True)
    return values, counts / J.size


def tv_distance(pj_a, pj_b):
    """Total-variation distance between two ``(values, probabilities)`` pairs."""
    d = {}
    for (vals, p), sign in ((pj_a, 1), (pj_b, -1)):
        for v, q in zip(vals, p):
            d[int(v)] = d.get(int(v), 0.0) + sign * q
    return 0.5 * sum(abs(x) for x in d.values())


@dataclass
class CWMCResult:
    labels: np.ndarray
    trace: object
    sigma: list
    xi: list

    def site_summary(self, k, which="sigma"):
        return getattr(self, which)[self.labels[k]]


def cwmc(labels, data, counts, cfg, trace_path=None, exc=None, cache=None, level=0.9):
    """Rerun the sampler on a fixed partition and summarise each cluster's parameters."""
    labels = canonical(labels)
    moves = MoveConfig.fixed_partition()
    tr = run_chain(data, counts, cfg, moves, trace_path=trace_path, fixed_labels=labels,
                   exc=exc, cache=cache)
    J = int(labels.max()) + 1
    S = np.vstack(tr.sigma)
    X = np.vstack(tr.xi)
    return CWMCResult(labels, tr, [summarize(S[:, j], level) for j in range(J)],
                      [summarize(X[:, j], level) for j in range(J)])


def exceedance_rate(periods_per_year, p):
    """Expected number of threshold exceedances per year, ``periods_per_year * (1 - p)``."""
    return periods_per_year * (1.0 - p)


def return_level(u, psi, nu, lambda_u, tau):
    """Level exceeded on average once every ``tau`` years."""
    m = np.asarray(lambda_u * tau, dtype=float)
    if np.any(m <= 1):
        raise ValueError("lambda_u * tau must exceed 1 (the level would lie below the threshold)")
    psi = np.asarray(psi, dtype=float)
    nu = np.asarray(nu, dtype=float)
    lm = np.log(m)
    small = np.abs(nu) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(small, u + psi * lm * (1 + 0.5 * nu * lm), u + psi / nu * np.expm1(nu * lm))
    return out if out.ndim else float(out)


def return_level_summary(trace, thresholds, lambda_u, taus, level=0.9):
    """Per-site posterior median and interval of each return level.

    Returns an array of shape ``(K, len(taus), 3)`` holding (median, lo, hi).
    """
    sig = trace.site_values("sigma")
    xi = trace.site_values("xi")
    a = (1 - level) / 2
    lam = np.broadcast_to(np.asarray(lambda_u, dtype=float), (sig.shape[1],))
    out = np.empty((sig.shape[1], len(taus), 3))
    for k in range(sig.shape[1]):
        for i, tau in enumerate(taus):
            rl = return_level(thresholds[k], sig[:, k], xi[:, k], lam[k], tau)
            out[k, i] = np.quantile(rl, [0.5, a, 1 - a])
    return out


def marginal_table(trace, level=0.9):
    """Per-site (psi_med, psi_lo, psi_hi, nu_med, nu_lo, nu_hi, psi_mean, nu_mean) by site-wise integration."""
    sig = trace.site_values("sigma")
    xi = trace.site_values("xi")
    a = (1 - level) / 2
    q = [0.5, a, 1 - a]
    return np.hstack([np.quantile(sig, q, axis=0).T, np.quantile(xi, q, axis=0).T,
                      sig.mean(axis=0)[:, None], xi.mean(axis=0)[:, None]])
