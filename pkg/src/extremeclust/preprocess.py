"""From raw series to the two views the model consumes.

Site-wise threshold exceedances feed the marginal likelihood; ranks through
the empirical CDF feed the pairwise joint-exceedance counts. Point-located
sites get their adjacency from the Voronoi (Delaunay) structure.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .data_model import DependenceCounts

log = logging.getLogger(__name__)

MIN_THRESHOLD_OBS = 10


@dataclass(frozen=True)
class RawSeries:
    site_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.int64)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-d and of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError(f"timestamps for site {self.site_id} are not strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


def aggregate(series, window):
    """Rolling sum over ``window`` consecutive time steps ending at each time.

    A window with any missing or absent step is missing.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    t0 = series.times[0]
    n = series.times[-1] - t0 + 1
    full = np.full(n, np.nan)
    full[series.times - t0] = series.values
    c = np.concatenate([[0.0], np.cumsum(np.nan_to_num(full))])
    bad = np.concatenate([[0], np.cumsum(np.isnan(full))])
    idx = np.arange(window, n + 1)
    sums = c[idx] - c[idx - window]
    nbad = bad[idx] - bad[idx - window]
    out = np.where(nbad > 0, np.nan, sums)
    return RawSeries(series.site_id, np.arange(t0 + window - 1, t0 + n), out)


def decluster(series, period_length, origin=None, n_periods=None):
    """Keep the largest non-missing observation in each period.

    Periods are ``[origin + p*L, origin + (p+1)*L)``; pass the same ``origin``
    for every site so that all sites share one grid. The result is indexed by
    the period start time; all-missing periods are NaN.
    """
    if period_length < 1:
        raise ValueError("period_length must be >= 1")
    if series.times.size == 0:
        raise ValueError(f"empty series for site {series.site_id}")
    if origin is None:
        origin = int(series.times[0])
    p = (series.times - origin) // period_length
    if np.any(p < 0):
        raise ValueError("origin lies after the first timestamp")
    if n_periods is None:
        n_periods = int(p.max()) + 1
    out = np.full(n_periods, -np.inf)
    ok = ~np.isnan(series.values) & (p < n_periods)
    np.maximum.at(out, p[ok], series.values[ok])
    out[np.isneginf(out)] = np.nan
    return RawSeries(series.site_id, origin + period_length * np.arange(n_periods), out)


def decluster_all(series_list, period_length):
    """Decluster several sites on a common grid; returns a ``K x T`` matrix."""
    origin = min(int(s.times[0]) for s in series_list if s.times.size)
    last = max(int(s.times[-1]) for s in series_list if s.times.size)
    n_periods = (last - origin) // period_length + 1
    return np.vstack([decluster(s, period_length, origin, n_periods).values for s in series_list])


def empirical_threshold(values, p):
    """Type-7 (linear interpolation) empirical ``p``-quantile of the observed values."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    if x.size < MIN_THRESHOLD_OBS:
        raise ValueError(f"insufficient data for a threshold: {x.size} observations")
    return float(np.quantile(x, p))


def standardize(values):
    x = np.asarray(values, dtype=float)
    obs = x[~np.isnan(x)]
    if obs.size < 2:
        raise ValueError("need at least two observations to standardize")
    sd = obs.std()
    if not sd > 0:
        raise ValueError("zero variance series")
    return (x - obs.mean()) / sd


def ecdf_values(values):
    """Empirical CDF at each observation, ``#{obs <= x} / (n + 1)``; NaN stays NaN."""
    x = np.asarray(values, dtype=float)
    ok = ~np.isnan(x)
    srt = np.sort(x[ok])
    out = np.full(x.shape, np.nan)
    out[ok] = np.searchsorted(srt, x[ok], side="right") / (srt.size + 1.0)
    return out


def dependence_counts(data):
    """Directed joint-exceedance counts ``P`` and conditioning counts ``Q``."""
    u = data.dep_threshold
    F = np.vstack([ecdf_values(row) for row in data.values])
    exceed = np.nan_to_num(F, nan=0.0) > u
    obs = data.mask
    pairs, P, Q = [], [], []
    for a, b in data.adjacency:
        for k, k2 in ((a, b), (b, a)):
            cond = exceed[k2] & obs[k]
            q = int(cond.sum())
            p = int((cond & exceed[k]).sum())
            if q == 0:
                log.warning("pair (%d,%d) has Q = 0 and is dropped from the dependence likelihood",
                            k + 1, k2 + 1)
            pairs.append((k, k2))
            P.append(p)
            Q.append(q)
    return DependenceCounts(np.array(pairs, dtype=np.int64).reshape(-1, 2), P, Q)


def empirical_chi(P, Q):
    if Q <= 0:
        raise ValueError("Q must be positive")
    return P / Q


def voronoi_adjacency(locations):
    """Pairs of sites whose Voronoi cells share an edge (the Delaunay edges).

    Cocircular configurations are broken by lifting each point to
    ``x^2 + y^2 + eta * r^2`` where ``r`` is its lexicographic rank, a
    deterministic stand-in for symbolic perturbation. Collinear inputs are
    chained along the line.
    """
    pts = np.asarray(locations, dtype=float)
    K = pts.shape[0]
    if pts.ndim != 2 or pts.shape[1] != 2 or K < 2:
        raise ValueError("need at least two 2-d points")
    if np.unique(pts, axis=0).shape[0] != K:
        raise ValueError("duplicate points")
    centred = pts - pts.mean(axis=0)
    ext = np.abs(centred).max()
    sv = np.linalg.svd(centred / ext, compute_uv=False)
    if K == 2 or sv[1] < 1e-12 * sv[0]:
        direction = np.linalg.svd(centred, full_matrices=False)[2][0]
        order = np.argsort(centred @ direction, kind="stable")
        return {tuple(sorted((int(a), int(b)))) for a, b in zip(order[:-1], order[1:])}
    if K == 3:
        return {(0, 1), (0, 2), (1, 2)}
    x = centred / ext
    rank = np.empty(K)
    rank[np.lexsort((x[:, 1], x[:, 0]))] = np.arange(K)
    eta = 1e-9
    lifted = np.c_[x, (x ** 2).sum(axis=1) + eta * (rank / K) ** 2]
    hull = ConvexHull(lifted)
    edges = set()
    for simplex, eq in zip(hull.simplices, hull.equations):
        if eq[2] >= -1e-12:  # upper or vertical facet
            continue
        for i in range(3):
            for j in range(i + 1, 3):
                a, b = int(simplex[i]), int(simplex[j])
                edges.add((min(a, b), max(a, b)))
    return edges
