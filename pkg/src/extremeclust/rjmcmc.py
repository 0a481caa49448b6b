"""Reversible-jump sampler over partitions, cluster parameters and hyperparameters.

Seven moves are drawn at random each iteration: birth, death and shift of a
cluster centre (which change the partition), independence-sampler updates of
the scale, shape and dependence parameters, and a Gibbs sweep over the
hyperparameters.

The marginal likelihood of a cluster only depends on its site set, so its
MLE and adjustment block are cached by site set (:class:`FitCache`); a
partition move refits only clusters whose site set changed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, priors
from .data_model import ClusterState, assign_labels
from .dependence import PairTable
from .marginal import Exceedances, FitCache
from .trace import TraceStore, TraceWriter, format_row

log = logging.getLogger(__name__)

MOVES = ("birth", "death", "shift", "sigma", "xi", "chi", "hyper")
_CHUNK = 4096


@dataclass(frozen=True)
class MoveConfig:
    birth: float = 0.2
    death: float = 0.2
    shift: float = 0.2
    sigma: float = 0.1
    xi: float = 0.1
    chi: float = 0.1
    hyper: float = 0.1

    def __post_init__(self):
        p = self.probabilities
        if np.any(p < 0):
            raise ValueError("move probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"move probabilities sum to {p.sum()}, not 1")

    @property
    def probabilities(self):
        return np.array([getattr(self, m) for m in MOVES], dtype=float)

    @classmethod
    def fixed_partition(cls):
        """Birth, death and shift switched off; the other moves keep their relative weights."""
        return cls(0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25)


@dataclass(frozen=True)
class ChainConfig:
    n_iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    initial_clusters: int | None = None
    initial_centre_fraction: float | None = 0.1
    flat_likelihood: bool = False
    prior: priors.PriorSpec = field(default_factory=priors.PriorSpec)

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thinning must be >= 1")
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("need 0 <= burn_in < n_iterations")
        if self.initial_clusters is not None and self.initial_clusters < 1:
            raise ValueError("initial_clusters must be >= 1")

    def n_retained(self):
        return (self.n_iterations - self.burn_in) // self.thin

    def initial_J(self, K):
        if self.initial_clusters is not None:
            return min(self.initial_clusters, K)
        frac = self.initial_centre_fraction if self.initial_centre_fraction is not None else 0.1
        return int(min(K, max(1, round(frac * K))))


LOG_2PI = math.log(2 * math.pi)


def _ln_norm(x, mean, var):
    return -0.5 * (LOG_2PI + math.log(var)) - 0.5 * (x - mean) ** 2 / var


def _exp(x):
    return math.exp(x) if x < 709.0 else math.inf


def _ln_lognorm(x, mu, var):
    lx = math.log(x)
    return -lx - 0.5 * (LOG_2PI + math.log(var)) - 0.5 * (lx - mu) ** 2 / var


def _ln_expon(x, rate):
    return math.log(rate) - rate * x if x >= 0 else -math.inf


def _diff(new, old):
    """``new - old`` where leaving a zero-density state is always allowed."""
    if old == -math.inf:
        return math.inf if new > -math.inf else -math.inf
    return new - old


def _insert(a, i, v):
    out = np.empty(a.shape[0] + 1, dtype=a.dtype)
    out[:i] = a[:i]
    out[i] = v
    out[i + 1:] = a[i:]
    return out


def _delete(a, i):
    return np.concatenate((a[:i], a[i + 1:]))


class _HyperView:
    """Minimal state view for the hyperparameter update."""

    __slots__ = ("sigma", "xi", "epsilon", "hyper")

    def __init__(self, sigma, xi, epsilon, hyper):
        self.sigma, self.xi, self.epsilon, self.hyper = sigma, xi, epsilon, hyper

    @property
    def J(self):
        return self.sigma.shape[0]


@dataclass
class _Cur:
    """Mutable chain state plus the likelihood pieces cached for it."""

    centres: np.ndarray | None
    labels: np.ndarray
    sigma: np.ndarray
    xi: np.ndarray
    eps: np.ndarray
    gamma0: float
    beta: float
    fits: list
    mll: np.ndarray
    dll: float
    log_ratio: float = 0.0

    @property
    def J(self):
        return self.sigma.shape[0]


class Sampler:
    """One chain. Holds immutable data, the fit cache and the current state."""

    def __init__(self, data, counts, cfg, moves=None, exc=None, fixed_labels=None, cache=None):
        self.data = data
        self.K = data.n_sites
        self.dist = np.ascontiguousarray(data.distances, dtype=float)
        self.cfg = cfg
        self.moves = moves if moves is not None else MoveConfig()
        self.spec = cfg.prior
        self.flat = cfg.flat_likelihood
        self.table = PairTable.build(counts, data.distances)
        self.exc = exc if exc is not None else Exceedances.from_site_data(data)
        self.cache = cache if cache is not None else FitCache(self.exc)
        self.neigh = data.neighbours()
        root = np.random.SeedSequence(cfg.seed)
        s_move, s_prop, s_hyper, s_init = root.spawn(4)
        self.rng_move = np.random.default_rng(s_move)
        self.rng = np.random.default_rng(s_prop)
        self.rng_hyper = np.random.default_rng(s_hyper)
        self.rng_init = np.random.default_rng(s_init)
        p = self.moves.probabilities
        self.log_pb_pd = math.log(p[0] / p[1]) if p[0] > 0 and p[1] > 0 else 0.0
        self.fixed = fixed_labels is not None
        if self.fixed and (p[0] > 0 or p[1] > 0 or p[2] > 0):
            raise ValueError("a fixed partition requires zero birth, death and shift probabilities")
        self.hyper = self.spec.initial_hyper()
        self.proposed = dict.fromkeys(MOVES, 0)
        self.accepted = dict.fromkeys(MOVES, 0)
        self.cur = self._initial_state(fixed_labels)

    # ----- likelihood pieces -------------------------------------------------

    def _fit(self, labels, j):
        if self.flat:
            return None
        return self.cache.get(labels == j)

    def _mll(self, fit, sigma, xi):
        if self.flat:
            return 0.0
        if not fit.ok:
            return -math.inf
        return fit.loglik(sigma, xi)

    def _dll(self, labels, gamma0, eps, beta):
        if self.flat:
            return 0.0
        t = self.table
        return kernels.dep_loglik(t.ii, t.jj, t.d, t.p1, t.q1, t.p2, t.q2, t.lc1, t.lc2, labels,
                                  np.log(gamma0) - eps, math.log(gamma0), beta)

    def _build(self, centres, labels, sigma, xi, eps, gamma0, beta, reuse=None):
        """Assemble a state, reusing marginal terms of clusters whose fit object is unchanged.

        ``reuse`` maps new cluster index to old cluster index.
        """
        J = sigma.shape[0]
        fits = [self._fit(labels, j) for j in range(J)]
        mll = np.empty(J)
        for j in range(J):
            o = reuse[j] if reuse is not None else None
            if (o is not None and fits[j] is self.cur.fits[o] and sigma[j] == self.cur.sigma[o]
                    and xi[j] == self.cur.xi[o]):
                mll[j] = self.cur.mll[o]
            else:
                mll[j] = self._mll(fits[j], sigma[j], xi[j])
        dll = self._dll(labels, gamma0, eps, beta)
        return _Cur(centres, labels, sigma, xi, eps, gamma0, beta, fits, mll, dll)

    def _initial_state(self, fixed_labels, max_tries=1000):
        rng = self.rng_init
        h = self.hyper
        for _ in range(max_tries):
            if fixed_labels is not None:
                labels = np.ascontiguousarray(fixed_labels, dtype=np.int64)
                centres = None
                J = int(labels.max()) + 1
                if np.unique(labels).size != J or labels.min() < 0:
                    raise ValueError("fixed labels must use every cluster 0..J-1")
            else:
                J = self.cfg.initial_J(self.K)
                centres = np.sort(rng.choice(self.K, size=J, replace=False)).astype(np.int64)
                labels = assign_labels(centres, self.dist)
            sigma = priors.sample_sigma(h, rng, J)
            xi = priors.sample_xi(h, rng, J)
            eps = priors.sample_epsilon(h, rng, J) if J > 1 else np.zeros(1)
            gamma0 = priors.sample_gamma0(rng, self.spec)
            beta = priors.sample_beta(rng, self.spec)
            self.cur = None
            st = self._build(centres, labels, sigma, xi, eps, gamma0, beta)
            if self.flat or all(f.ok for f in st.fits):
                return st
            if fixed_labels is not None:
                bad = [j + 1 for j, f in enumerate(st.fits) if not f.ok]
                raise ValueError(f"GPD fit fails for fixed cluster(s) {bad}: {st.fits[bad[0] - 1].error}")
        raise RuntimeError("could not draw an initial partition whose clusters can all be fitted")

    # ----- state views -------------------------------------------------------

    def state(self, cur=None):
        c = self.cur if cur is None else cur
        return ClusterState(c.centres, c.labels, c.sigma, c.xi, c.gamma0, c.eps, c.beta, self.hyper)

    def loglik(self, cur=None):
        c = self.cur if cur is None else cur
        return float(np.sum(c.mll) + c.dll)

    def log_posterior(self, cur=None):
        return self.loglik(cur) + priors.log_prior(self.state(cur), self.K, self.spec)

    # ----- proposal densities -------------------------------------------------

    def _birth_proposal_params(self, members_old_labels, cur):
        """Proposal parameters for a new cluster whose sites currently carry these labels.

        Returns ``(mu, s2, m_xi, rate)``: the lognormal for ``sigma*`` has mean
        equal to the members' average ``sigma`` and variance
        ``(e^theta - 1) e^(2 mu_sigma + theta)``; ``xi*`` is normal around the
        members' average ``xi``; ``epsilon*`` is exponential with mean equal to
        the members' average ``epsilon`` (None with a single cluster).
        """
        h = self.hyper
        n = members_old_labels.shape[0]
        m_sig = float(cur.sigma[members_old_labels].sum()) / n
        m_xi = float(cur.xi[members_old_labels].sum()) / n
        th = h.theta_sigma
        # log1p(v / m^2) in log space: theta can be large under the inverse-gamma hyperprior
        log_em1 = th if th > 40 else math.log(math.expm1(th))
        x = log_em1 + 2 * h.mu_sigma + th - 2 * math.log(m_sig)
        s2 = x + math.log1p(math.exp(-x)) if x > 0 else math.log1p(math.exp(x))
        mu = math.log(m_sig) - 0.5 * s2
        rate = None
        if cur.J > 1:
            tot = float(cur.eps[members_old_labels].sum())
            rate = n / tot if tot > 0 else math.inf
        return mu, s2, m_xi, rate

    def _log_new_terms(self, sig, xi, params):
        """log prior - log proposal of a new cluster's (sigma, xi)."""
        h = self.hyper
        mu, s2, m_xi, _ = params
        return (_ln_lognorm(sig, h.mu_sigma, h.theta_sigma) + _ln_norm(xi, h.mu_xi, h.theta_xi)
                - _ln_lognorm(sig, mu, s2) - _ln_norm(xi, m_xi, h.theta_xi))

    def _log_eps_terms(self, eps, rate):
        """log prior - log proposal of a new cluster's offset."""
        if not math.isfinite(rate):
            return -math.inf
        return _ln_expon(eps, self.hyper.theta_epsilon) - _ln_expon(eps, rate)

    def _labels_of(self, centres):
        return kernels.assign_labels(self.dist, centres)

    # ----- moves -------------------------------------------------------------

    def propose_birth(self, rng=None):
        """Return a proposed state (with ``log_ratio`` set), or None if impossible."""
        rng = self.rng if rng is None else rng
        cur = self.cur
        J = cur.J
        if J >= self.K:
            return None
        free = np.ones(self.K, dtype=bool)
        free[cur.centres] = False
        free = np.flatnonzero(free)
        c_new = int(free[rng.integers(free.size)])
        slot = int(rng.integers(J + 1))
        centres = _insert(cur.centres, slot, c_new)
        labels = self._labels_of(centres)
        old = cur.labels[labels == slot]
        params = self._birth_proposal_params(old, cur)
        mu, s2, m_xi, rate = params
        sig_new = _exp(rng.normal(mu, math.sqrt(s2)))
        xi_new = rng.normal(m_xi, math.sqrt(self.hyper.theta_xi))
        if not 0.0 < sig_new < math.inf:
            return None  # outside the representable range: treated as a rejection
        sigma = _insert(cur.sigma, slot, sig_new)
        xi = _insert(cur.xi, slot, xi_new)
        reuse = [j if j < slot else (None if j == slot else j - 1) for j in range(J + 1)]
        log_r = self._log_new_terms(sig_new, xi_new, params)
        if J == 1:
            # the old rate gamma_1 becomes gamma0 * exp(-e1); Jacobian exp(e1)
            e1 = rng.exponential(1.0 / self.hyper.theta_epsilon)
            e2 = rng.exponential(1.0 / self.hyper.theta_epsilon)
            eps = np.empty(2)
            eps[slot] = e2
            eps[1 - slot] = e1
            gamma0 = cur.gamma0 * _exp(e1)
            if gamma0 == math.inf:
                return None
            log_r += -self.spec.gamma0_rate * (gamma0 - cur.gamma0) + e1
        else:
            eps_new = rng.exponential(1.0 / rate) if math.isfinite(rate) else 0.0
            eps = _insert(cur.eps, slot, eps_new)
            gamma0 = cur.gamma0
            log_r += self._log_eps_terms(eps_new, rate)
        prop = self._build(centres, labels, sigma, xi, eps, gamma0, cur.beta, reuse)
        log_r += _diff(self.loglik(prop), self.loglik(cur))
        log_r += math.log(self.hyper.kappa / J) - self.log_pb_pd
        prop.log_ratio = log_r
        return prop

    def propose_death(self, rng=None):
        rng = self.rng if rng is None else rng
        cur = self.cur
        J = cur.J
        if J == 1:
            return None
        r = int(rng.integers(J))
        centres = _delete(cur.centres, r)
        labels = self._labels_of(centres)
        new_of_members = labels[cur.labels == r]
        sigma = _delete(cur.sigma, r)
        xi = _delete(cur.xi, r)
        reuse = [j if j < r else j + 1 for j in range(J - 1)]
        if J == 2:
            eps = np.zeros(1)
            gamma0 = cur.gamma0 * math.exp(-cur.eps[1 - r])
        else:
            eps = _delete(cur.eps, r)
            gamma0 = cur.gamma0
        prop = self._build(centres, labels, sigma, xi, eps, gamma0, cur.beta, reuse)
        # log ratio of the reverse birth, evaluated from the proposed state
        params = self._birth_proposal_params(new_of_members, prop)
        log_b = self._log_new_terms(cur.sigma[r], cur.xi[r], params)
        if J == 2:
            log_b += -self.spec.gamma0_rate * (cur.gamma0 - gamma0) + cur.eps[1 - r]
        else:
            log_b += self._log_eps_terms(cur.eps[r], params[3])
        log_b += math.log(self.hyper.kappa / (J - 1)) - self.log_pb_pd
        prop.log_ratio = _diff(self.loglik(prop), self.loglik(cur)) - log_b
        return prop

    def shift_neighbourhood(self, centre, centres):
        nb = self.neigh[centre]
        return nb[~np.isin(nb, centres, kind="table")] if nb.size else nb

    def propose_shift(self, rng=None):
        rng = self.rng if rng is None else rng
        cur = self.cur
        j = int(rng.integers(cur.J))
        N = self.shift_neighbourhood(cur.centres[j], cur.centres)
        if N.size == 0:
            return None
        c_new = int(N[rng.integers(N.size)])
        centres = cur.centres.copy()
        old_centre = centres[j]
        centres[j] = c_new
        N_rev = self.shift_neighbourhood(c_new, centres)
        assert old_centre in N_rev
        labels = self._labels_of(centres)
        prop = self._build(centres, labels, cur.sigma, cur.xi, cur.eps, cur.gamma0, cur.beta,
                           list(range(cur.J)))
        prop.log_ratio = (_diff(self.loglik(prop), self.loglik(cur))
                          + math.log(N.size) - math.log(N_rev.size))
        return prop

    def _accept(self, log_ratio, rng):
        if log_ratio >= 0:
            return True
        if log_ratio == -math.inf or math.isnan(log_ratio):
            return False
        return math.log(rng.random()) < log_ratio

    def move_partition(self, name):
        prop = getattr(self, "propose_" + name)()
        if prop is None:
            return False
        if self._accept(prop.log_ratio, self.rng):
            self.cur = prop
            return True
        return False

    def _move_marginal(self, which):
        cur = self.cur
        h = self.hyper
        rng = self.rng
        acc = False
        for j in range(cur.J):
            if which == 0:
                s, x = _exp(rng.normal(h.mu_sigma, math.sqrt(h.theta_sigma))), cur.xi[j]
                if not 0.0 < s < math.inf:
                    continue
            else:
                s, x = cur.sigma[j], rng.normal(h.mu_xi, math.sqrt(h.theta_xi))
            ll = self._mll(cur.fits[j], s, x)
            if self._accept(_diff(ll, cur.mll[j]), rng):
                if which == 0:
                    cur.sigma = cur.sigma.copy()
                    cur.sigma[j] = s
                else:
                    cur.xi = cur.xi.copy()
                    cur.xi[j] = x
                cur.mll = cur.mll.copy()
                cur.mll[j] = ll
                acc = True
        return acc

    def move_sigma(self):
        return self._move_marginal(0)

    def move_xi(self):
        return self._move_marginal(1)

    def move_chi(self):
        cur = self.cur
        rng = self.rng
        acc = False
        if cur.J > 1:
            for j in range(cur.J):
                eps = cur.eps.copy()
                eps[j] = rng.exponential(1.0 / self.hyper.theta_epsilon)
                ll = self._dll(cur.labels, cur.gamma0, eps, cur.beta)
                if self._accept(_diff(ll, cur.dll), rng):
                    cur.eps, cur.dll, acc = eps, ll, True
        g = priors.sample_gamma0(rng, self.spec)
        ll = self._dll(cur.labels, g, cur.eps, cur.beta)
        if self._accept(_diff(ll, cur.dll), rng):
            cur.gamma0, cur.dll, acc = g, ll, True
        b = priors.sample_beta(rng, self.spec)
        ll = self._dll(cur.labels, cur.gamma0, cur.eps, b)
        if self._accept(_diff(ll, cur.dll), rng):
            cur.beta, cur.dll, acc = b, ll, True
        return acc

    def move_hyper(self):
        c = self.cur
        self.hyper = priors.gibbs_hyper(_HyperView(c.sigma, c.xi, c.eps, self.hyper), self.rng_hyper, self.spec)
        return True

    def step(self, move):
        name = MOVES[move]
        self.proposed[name] += 1
        if move < 3:
            ok = self.move_partition(name)
        else:
            ok = getattr(self, "move_" + name)()
        if ok:
            self.accepted[name] += 1

    def acceptance_rates(self):
        return {m: (self.accepted[m] / self.proposed[m] if self.proposed[m] else float("nan")) for m in MOVES}

    def record(self, store, it, writer=None):
        c = self.cur
        lp = self.log_posterior()
        store.append(it, lp, c.centres, c.labels, c.sigma, c.xi, c.gamma0, c.eps, c.beta, self.hyper)
        if writer is not None:
            writer.write(format_row(it, lp, c.centres, c.labels, c.sigma, c.xi, c.gamma0, c.eps,
                                    c.beta, self.hyper))

    def run(self, trace_path=None, progress=None):
        cfg = self.cfg
        store = TraceStore(self.K)
        writer = TraceWriter(trace_path) if trace_path is not None else None
        probs = self.moves.probabilities
        try:
            it = 0
            while it < cfg.n_iterations:
                n = min(_CHUNK, cfg.n_iterations - it)
                draws = self.rng_move.choice(len(MOVES), size=_CHUNK, p=probs)[:n]
                for m in draws:
                    it += 1
                    self.step(m)
                    if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                        self.record(store, it, writer)
                if progress is not None:
                    progress(it)
        except BaseException:
            if writer is not None:
                writer.abort()
            raise
        if writer is not None:
            writer.close()
        store.acceptance = {m: (self.proposed[m], self.accepted[m]) for m in MOVES}
        return store


def run_chain(data, counts, cfg, moves=None, trace_path=None, fixed_labels=None, exc=None, cache=None):
    """Run one chain and return its :class:`TraceStore`; deterministic given ``cfg.seed``."""
    s = Sampler(data, counts, cfg, moves, exc=exc, fixed_labels=fixed_labels, cache=cache)
    return s.run(trace_path)


def log_posterior(state, data, counts, cache=None, flat=False, spec=priors.DEFAULT_PRIOR):
    """Adjusted marginal + dependence log-likelihood + log prior, computed from scratch."""
    lp = priors.log_prior(state, data.n_sites, spec)
    if flat:
        return lp
    from .dependence import table_loglik
    if cache is None:
        cache = FitCache(Exceedances.from_site_data(data))
    table = PairTable.build(counts, data.distances)
    ll = table_loglik(table, state.labels, state.gamma0, state.epsilon, state.beta)
    for j in range(state.J):
        fit = cache.get(state.labels == j)
        if not fit.ok:
            return -math.inf
        ll += fit.loglik(state.sigma[j], state.xi[j])
    return ll + lp
