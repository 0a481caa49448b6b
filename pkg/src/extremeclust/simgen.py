"""Synthetic data for the three simulation studies and for custom experiments.

The bundled 20-site map is synthetic: the coordinates were chosen so that the
Voronoi adjacency and a three-centre partition resemble a small regional map.
They are not real locations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data_model import DependenceCounts, SiteData, assign_labels
from .dependence import bb_shape
from .preprocess import voronoi_adjacency

FIXTURE_LOCATIONS = np.array([
    (4.269, 0.073), (3.102, 1.007), (4.190, 1.029), (4.220, 1.777), (4.241, 2.830),
    (-0.223, -0.000), (1.061, -0.283), (1.789, 0.257), (2.742, -0.222), (-0.079, 1.007),
    (1.098, 0.865), (1.783, 1.173), (0.289, 1.823), (1.032, 1.990), (1.912, 2.055),
    (2.841, 2.181), (-0.020, 2.866), (0.750, 3.238), (1.958, 2.789), (3.104, 2.821),
])
FIXTURE_CENTRES = np.array([2, 7, 18])

STUDY3_SIGMA = (2.0, 2.3, 2.6)
STUDY3_XI = (0.05, 0.10, 0.15)


def fixture_distances():
    d = np.linalg.norm(FIXTURE_LOCATIONS[:, None, :] - FIXTURE_LOCATIONS[None, :, :], axis=-1)
    return d / d.max()


def fixture_adjacency():
    return sorted(voronoi_adjacency(FIXTURE_LOCATIONS))


def fixture_labels():
    return assign_labels(FIXTURE_CENTRES, fixture_distances())


def gpd_ppf(u, sigma, xi):
    """Inverse survival form ``sigma * (u**-xi - 1) / xi`` with ``u`` uniform on (0, 1)."""
    u = np.asarray(u, dtype=float)
    xi = np.asarray(xi, dtype=float)
    small = np.abs(xi) < 1e-12
    safe = np.where(small, 1.0, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, -sigma * np.log(u), sigma * np.expm1(-safe * np.log(u)) / safe)
    return out


def simulate_marginals(K, n_exc, sigma, xi, Z, rng):
    """``K x n_exc`` matrix of independent GPD(sigma_Z[k], xi_Z[k]) excesses."""
    Z = np.asarray(Z)
    s = np.asarray(sigma, dtype=float)[Z][:, None]
    x = np.asarray(xi, dtype=float)[Z][:, None]
    U = rng.random((K, n_exc))
    return gpd_ppf(1.0 - U, s, x)


def impose_rank_matching(y, rng=None):
    """Reorder each row so the m-th largest values of all rows share a time index.

    The common time order is a random permutation when ``rng`` is given,
    otherwise descending.
    """
    try:
        y = np.asarray(y, dtype=float)
    except ValueError:
        raise ValueError("need equal counts per site") from None
    if y.ndim != 2:
        raise ValueError("need a K x n matrix with equal counts per site")
    n = y.shape[1]
    slots = rng.permutation(n) if rng is not None else np.arange(n)
    out = np.empty_like(y)
    srt = -np.sort(-y, axis=1)
    out[:, slots] = srt
    return out


def simulate_dependence_counts(Z, distances, adjacency, gamma0, epsilon, beta, Q, rng):
    """Beta-then-binomial joint-exceedance counts for both orientations of every adjacent pair."""
    Z = np.asarray(Z)
    gam = gamma0 * np.exp(-np.asarray(epsilon, dtype=float))
    pairs, P, QQ = [], [], []
    for a, b in sorted(adjacency):
        g = gam[Z[a]] if Z[a] == Z[b] else gamma0
        alpha, bb = bb_shape(g, distances[a, b], beta)
        for k, k2 in ((a, b), (b, a)):
            chi = rng.beta(alpha, bb) if alpha > 0 else 0.0
            pairs.append((k, k2))
            P.append(rng.binomial(Q, chi))
            QQ.append(Q)
    return DependenceCounts(np.array(pairs, dtype=np.int64).reshape(-1, 2), P, QQ)


def correlation_from_distance(distances, rho=0.5):
    return np.exp(-np.asarray(distances) / rho)


def simulate_gaussian_copula(K, n_exc, sigma, xi, Z, corr, rng):
    """GPD margins joined by a Gaussian copula with correlation matrix ``corr``."""
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (K, K) or not np.allclose(corr, corr.T):
        raise ValueError("correlation matrix must be symmetric K x K")
    w, V = np.linalg.eigh(corr)
    if w.min() < -1e-10 * max(1.0, w.max()):
        raise ValueError("correlation matrix is not positive semi-definite")
    L = V * np.sqrt(np.clip(w, 0, None))
    X = L @ rng.standard_normal((K, n_exc))
    # survival probabilities; the copula is symmetric so this keeps the dependence
    U = np.clip(ndtr(-X), 1e-300, 1.0)
    Z = np.asarray(Z)
    return gpd_ppf(U, np.asarray(sigma, dtype=float)[Z][:, None], np.asarray(xi, dtype=float)[Z][:, None])


@dataclass(frozen=True)
class StudyData:
    study: int
    data: SiteData
    counts: DependenceCounts
    truth: np.ndarray
    sigma: tuple
    xi: tuple
    gamma0: float
    epsilon: tuple
    beta: float


def simulate_study(study, seed, dependent=False, n_exc=100, Q=20, rho=0.5):
    """Simulate one dataset of study 1, 2 or 3 on the bundled map.

    Study 1: one cluster, GPD(2, 0.1), independent sites. Study 2: as study
    1 with ranks matched across sites. Study 3: three clusters; ``dependent``
    joins the margins with a Gaussian copula.
    """
    ss = np.random.SeedSequence(seed)
    r_marg, r_dep = (np.random.default_rng(s) for s in ss.spawn(2))
    d = fixture_distances()
    adj = fixture_adjacency()
    K = d.shape[0]
    if study in (1, 2):
        truth = np.zeros(K, dtype=np.int64)
        sigma, xi, gamma0, eps, beta = (2.0,), (0.1,), 2.0, (0.0,), 10.0
    elif study == 3:
        truth = fixture_labels()
        sigma, xi, gamma0, eps, beta = STUDY3_SIGMA, STUDY3_XI, 3.0, (np.log(1.5),) * 3, 10.0
    else:
        raise ValueError(f"unknown study {study}")
    if dependent and study == 3:
        y = simulate_gaussian_copula(K, n_exc, sigma, xi, truth, correlation_from_distance(d, rho), r_marg)
    else:
        y = simulate_marginals(K, n_exc, sigma, xi, truth, r_marg)
    if study == 2:
        y = impose_rank_matching(y, r_marg)
    counts = simulate_dependence_counts(truth, d, adj, gamma0, eps, beta, Q, r_dep)
    data = SiteData.build(y, d, adj, np.zeros(K), locations=FIXTURE_LOCATIONS)
    return StudyData(study, data, counts, truth, sigma, xi, gamma0, eps, beta)
