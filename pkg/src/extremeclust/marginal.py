"""GPD margins: density, cluster MLEs and the sandwich curvature adjustment.

The working-independence likelihood of a cluster treats every excess at every
site as independent. Its maximiser is kept, but its curvature is corrected
with ``B = H^{-1/2} (H V^{-1} H)^{1/2}`` so that the adjusted log-likelihood
``l(theta_hat + B (theta - theta_hat))`` has the sandwich covariance. ``V`` is
estimated from per-time score totals, which is where within-time dependence
between sites enters.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import kernels

XI_TOL = 1e-6
DERIV_XI_TOL = 1e-4
XI_BOUNDS = (-0.5, 2.0)
MIN_EXCEEDANCES = 5
V_COND_MAX = 1e12


class FitError(RuntimeError):
    """Raised when a cluster's GPD fit cannot support the sandwich adjustment."""


def gpd_logpdf(y, sigma, xi):
    """Log-density of GPD(sigma, xi) at excesses ``y > 0``; ``-inf`` off support."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    y = np.asarray(y, dtype=float)
    z = y / sigma
    if abs(xi) < XI_TOL:
        out = -np.log(sigma) - z - xi * (z - 0.5 * z * z) - xi * xi * (z ** 3 / 3.0 - 0.5 * z * z)
    else:
        w = xi * z
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(w > -1.0, -np.log(sigma) - (1.0 + 1.0 / xi) * np.log1p(np.maximum(w, -1.0)),
                           -np.inf)
    return out if out.ndim else float(out)


def gpd_derivatives(y, sigma, xi):
    """Per-observation gradient and Hessian of the GPD log-density.

    Returns ``(g, h)`` with ``g`` of shape ``(n, 2)`` ordered ``(sigma, xi)``
    and ``h`` of shape ``(n, 2, 2)``. Points must lie inside the support.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = y.size
    g = np.empty((n, 2))
    h = np.empty((n, 2, 2))
    if abs(xi) < DERIV_XI_TOL:
        # cubic expansion in xi of (1 + 1/xi) log(1 + xi z)
        z = y / sigma
        a1 = z - z * z / 2
        a2 = z ** 3 / 3 - z * z / 2
        a3 = z ** 3 / 3 - z ** 4 / 4
        Az = 1 + xi * (1 - z) + xi ** 2 * (z * z - z) + xi ** 3 * (z * z - z ** 3)
        Azz = -xi + xi ** 2 * (2 * z - 1) + xi ** 3 * (2 * z - 3 * z * z)
        Azx = (1 - z) + 2 * xi * (z * z - z) + 3 * xi ** 2 * (z * z - z ** 3)
        g[:, 0] = -1 / sigma + Az * z / sigma
        g[:, 1] = -(a1 + 2 * xi * a2 + 3 * xi ** 2 * a3)
        h[:, 0, 0] = (1 - Azz * z * z - 2 * Az * z) / sigma ** 2
        h[:, 0, 1] = h[:, 1, 0] = Azx * z / sigma
        h[:, 1, 1] = -(2 * a2 + 6 * xi * a3)
        return g, h
    s = sigma + xi * y
    L = np.log1p(xi * y / sigma)
    g[:, 0] = (y - sigma) / (sigma * s)
    g[:, 1] = L / xi ** 2 - (1 + xi) * y / (xi * s)
    h[:, 0, 0] = (-sigma * s - (y - sigma) * (sigma + s)) / (sigma * s) ** 2
    h[:, 0, 1] = h[:, 1, 0] = -(y - sigma) * y / (sigma * s * s)
    h[:, 1, 1] = (y / (s * xi ** 2) - 2 * L / xi ** 3
                  - y * (xi * s - (1 + xi) * (s + xi * y)) / (xi * xi * s * s))
    return g, h


@dataclass(frozen=True)
class Exceedances:
    """Per-site threshold excesses and the period index of each excess."""

    excess: tuple
    times: tuple
    n_times: int

    @classmethod
    def from_site_data(cls, data):
        ex, tt = [], []
        for k in range(data.n_sites):
            row = data.values[k]
            ok = data.mask[k] & (np.nan_to_num(row, nan=-np.inf) > data.thresholds[k])
            t = np.flatnonzero(ok)
            ex.append(np.ascontiguousarray(row[t] - data.thresholds[k]))
            tt.append(t.astype(np.int64))
        return cls(tuple(ex), tuple(tt), data.n_periods)

    @classmethod
    def from_arrays(cls, excess, times=None):
        ex = [np.ascontiguousarray(np.asarray(e, dtype=float)) for e in excess]
        if any(np.any(e <= 0) for e in ex):
            raise ValueError("excesses must be strictly positive")
        if times is None:
            times = [np.arange(e.size) for e in ex]
        tt = [np.asarray(t, dtype=np.int64) for t in times]
        n_times = int(max((t.max() + 1 for t in tt if t.size), default=0))
        return cls(tuple(ex), tuple(tt), n_times)

    @property
    def n_sites(self):
        return len(self.excess)

    def counts(self):
        return np.array([e.size for e in self.excess])

    def gather(self, sites):
        sites = np.asarray(sites)
        y = np.concatenate([self.excess[k] for k in sites]) if sites.size else np.empty(0)
        t = np.concatenate([self.times[k] for k in sites]) if sites.size else np.empty(0, np.int64)
        return np.ascontiguousarray(y), t


def loglik_ind(sigma, xi, labels, exc):
    """Working-independence GPD log-likelihood of all excesses given labels."""
    total = 0.0
    for j in range(len(sigma)):
        y, _ = exc.gather(np.flatnonzero(np.asarray(labels) == j))
        total += kernels.gpd_loglik(y, float(sigma[j]), float(xi[j]))
    return total


def _profile(y, theta):
    """Mean of log1p(theta*y) and its ratio to theta (the implied sigma)."""
    if abs(theta) * y.max() < 1e-8:
        r = np.mean(y - 0.5 * theta * y * y)
        return theta * r, r
    m = kernels.log1p_sum(y, theta) / y.shape[0]
    return m, m / theta


def _neg_profile(theta, y):
    xi, s = _profile(y, theta)
    if not s > 0:
        return np.inf
    return np.log(s) + xi + 1.0


def fit_gpd(y):
    """GPD maximum-likelihood fit of one pooled sample with ``xi`` in (-0.5, 2).

    The two-parameter problem is profiled onto ``t = xi / sigma``: for fixed
    ``t`` the best ``xi`` is ``mean(log1p(t*y))``. A grid over the admissible
    ``t`` range brackets the maximum, Brent's method refines it, and a few
    Newton steps on ``(sigma, xi)`` polish the result.
    """
    y = np.ascontiguousarray(np.asarray(y, dtype=float))
    n = y.size
    if n < MIN_EXCEEDANCES:
        raise FitError(f"insufficient exceedances: {n} < {MIN_EXCEEDANCES}")
    ymax = y.max()
    lo_edge = -1.0 / ymax
    t_edge = lo_edge * (1 - 1e-10)
    if _profile(y, t_edge)[0] > XI_BOUNDS[0]:
        # the shape cannot reach the lower bound before the support edge
        t_lo = t_edge
    else:
        t_lo = brentq(lambda t: _profile(y, t)[0] - XI_BOUNDS[0], t_edge, 0.0, xtol=1e-14)
    hi = 1.0 / y.mean()
    while _profile(y, hi)[0] < XI_BOUNDS[1]:
        hi *= 4.0
    t_hi = brentq(lambda t: _profile(y, t)[0] - XI_BOUNDS[1], 0.0, hi, xtol=1e-14)
    # the shape is roughly linear in t near 0 and varies over decades above it,
    # so the grid is linear below 0 and geometric above
    grid = np.concatenate([t_lo * np.linspace(1.0, 0.0, 12)[:-1], [0.0],
                           t_hi * np.geomspace(1e-5, 1.0, 21)])
    vals = np.array([_neg_profile(t, y) for t in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(_neg_profile, bounds=(a, b), args=(y,), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, abs(grid[i]))})
    xi, sig = _profile(y, res.x)
    theta = np.array([sig, xi])
    for _ in range(25):
        g, h = gpd_derivatives(y, theta[0], theta[1])
        G = g.sum(axis=0)
        Hs = h.sum(axis=0)
        if np.hypot(G[0] * theta[0], G[1]) / n < 1e-10:
            break
        try:
            step = -np.linalg.solve(Hs, G)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        base = kernels.gpd_loglik(y, theta[0], theta[1])
        while lam > 1e-6:
            cand = theta + lam * step
            if cand[0] > 0 and kernels.gpd_loglik(y, cand[0], cand[1]) >= base - 1e-12 * abs(base):
                theta = cand
                break
            lam *= 0.5
        else:
            break
    g, _ = gpd_derivatives(y, theta[0], theta[1])
    G = g.sum(axis=0)
    if np.hypot(G[0] * theta[0], G[1]) / n > 1e-6:
        raise FitError("GPD fit did not converge")
    if not XI_BOUNDS[0] + 1e-6 < theta[1] < XI_BOUNDS[1] - 1e-6:
        raise FitError("shape estimate on the boundary of (-0.5, 2)")
    return theta


def fit_mle(labels, exc):
    """Per-cluster MLEs as a ``(J, 2)`` array of ``(sigma_hat, xi_hat)``."""
    labels = np.asarray(labels)
    J = int(labels.max()) + 1
    out = np.empty((J, 2))
    for j in range(J):
        y, _ = exc.gather(np.flatnonzero(labels == j))
        out[j] = fit_gpd(y)
    return out


def cluster_information(y, t, theta_hat):
    """Observed information ``H`` and per-time score covariance ``V`` at the MLE."""
    g, h = gpd_derivatives(y, theta_hat[0], theta_hat[1])
    H = -h.sum(axis=0)
    _, inv = np.unique(t, return_inverse=True)
    s = np.column_stack([np.bincount(inv, weights=g[:, 0]), np.bincount(inv, weights=g[:, 1])])
    V = s.T @ s
    return H, V


def sandwich_blocks(theta_hat, labels, exc):
    labels = np.asarray(labels)
    J = theta_hat.shape[0]
    H = np.empty((J, 2, 2))
    V = np.empty((J, 2, 2))
    for j in range(J):
        y, t = exc.gather(np.flatnonzero(labels == j))
        H[j], V[j] = cluster_information(y, t, theta_hat[j])
        if np.any(np.linalg.eigvalsh(H[j]) <= 0):
            raise FitError(f"observed information of cluster {j + 1} is not positive definite")
    return H, V


def _sym_sqrt(A):
    w, Q = np.linalg.eigh(A)
    if np.any(w <= 0):
        raise FitError("matrix is not positive definite")
    return (Q * np.sqrt(w)) @ Q.T


def compute_B_block(H, V):
    H = 0.5 * (H + H.T)
    V = 0.5 * (V + V.T)
    if np.linalg.cond(V) > V_COND_MAX:
        V = V + 1e-8 * np.trace(V) / 2 * np.eye(2)
    sigma_inv = H @ np.linalg.solve(V, H)
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
    return np.linalg.solve(_sym_sqrt(H), _sym_sqrt(sigma_inv))


def compute_B(H_blocks, V_blocks):
    return np.array([compute_B_block(H, V) for H, V in zip(H_blocks, V_blocks)])


@dataclass(frozen=True)
class AdjustedMarginal:
    theta_hat: np.ndarray
    H_blocks: np.ndarray
    V_blocks: np.ndarray
    B_blocks: np.ndarray

    @classmethod
    def fit(cls, labels, exc):
        theta_hat = fit_mle(labels, exc)
        H, V = sandwich_blocks(theta_hat, labels, exc)
        return cls(theta_hat, H, V, compute_B(H, V))

    def B_matrix(self):
        """The full ``2J x 2J`` block-diagonal matrix, parameters ordered per cluster."""
        J = self.theta_hat.shape[0]
        B = np.zeros((2 * J, 2 * J))
        for j in range(J):
            B[2 * j:2 * j + 2, 2 * j:2 * j + 2] = self.B_blocks[j]
        return B


def adjusted_point(theta, theta_hat, B):
    d0 = theta[0] - theta_hat[0]
    d1 = theta[1] - theta_hat[1]
    return (theta_hat[0] + B[0, 0] * d0 + B[0, 1] * d1,
            theta_hat[1] + B[1, 0] * d0 + B[1, 1] * d1)


def loglik_adjusted(theta, adj, labels, exc):
    """Adjusted log-likelihood; ``theta`` is ``(J, 2)`` or flat ``(sigma_1, xi_1, ...)``."""
    theta = np.asarray(theta, dtype=float).reshape(-1, 2)
    labels = np.asarray(labels)
    total = 0.0
    for j in range(theta.shape[0]):
        s, x = adjusted_point(theta[j], adj.theta_hat[j], adj.B_blocks[j])
        if not s > 0:
            return -np.inf
        y, _ = exc.gather(np.flatnonzero(labels == j))
        total += kernels.gpd_loglik(y, s, x)
    return total


class ClusterFit:
    """MLE and adjustment block of one cluster, keyed by its site set."""

    __slots__ = ("sites", "y", "theta_hat", "H", "V", "B", "error")

    def __init__(self, sites, exc):
        self.sites = sites
        self.y, t = exc.gather(sites)
        self.theta_hat = self.H = self.V = self.B = None
        self.error = None
        try:
            self.theta_hat = fit_gpd(self.y)
            self.H, self.V = cluster_information(self.y, t, self.theta_hat)
            self.B = compute_B_block(self.H, self.V)
        except (FitError, np.linalg.LinAlgError, ValueError) as e:
            self.error = str(e)

    @property
    def ok(self):
        return self.error is None

    def loglik(self, sigma, xi):
        """Adjusted log-likelihood of this cluster at ``(sigma, xi)``."""
        th = self.theta_hat
        B = self.B
        d0 = sigma - th[0]
        d1 = xi - th[1]
        s = th[0] + B[0, 0] * d0 + B[0, 1] * d1
        if not s > 0:
            return -np.inf
        return kernels.gpd_loglik(self.y, s, th[1] + B[1, 0] * d0 + B[1, 1] * d1)


def site_set_key(mask):
    return np.packbits(mask).tobytes()


class FitCache:
    """LRU cache of :class:`ClusterFit` keyed by the cluster's site set.

    Fits depend only on which sites a cluster holds, so a cluster whose site
    set is unchanged by a move reuses its block untouched.
    """

    def __init__(self, exc, maxsize=200_000):
        self.exc = exc
        self.maxsize = maxsize
        self._d = OrderedDict()
        self.hits = 0
        self.misses = 0

    def get(self, mask):
        key = site_set_key(mask)
        fit = self._d.get(key)
        if fit is not None:
            self.hits += 1
            self._d.move_to_end(key)
            return fit
        self.misses += 1
        fit = ClusterFit(np.flatnonzero(mask), self.exc)
        self._d[key] = fit
        if len(self._d) > self.maxsize:
            self._d.popitem(last=False)
        return fit

    def __len__(self):
        return len(self._d)
