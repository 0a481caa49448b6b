"""Core value types and the centre-to-label rule.

Indices are 0-based everywhere inside the package; the CSV readers and
writers in :mod:`extremeclust.io` convert to and from the 1-based indices used
in external files.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Hyperparameters:
    """Hyperparameters of the cluster-parameter priors.

    ``theta_sigma`` and ``theta_xi`` are variances (of log-scale and shape
    respectively); ``theta_epsilon`` is the rate of the exponential prior on
    the dependence offsets; ``kappa`` is the Poisson rate of ``J - 1``.
    """

    kappa: float = 1.0
    mu_sigma: float = 0.0
    theta_sigma: float = 0.05
    mu_xi: float = 0.0
    theta_xi: float = 0.05
    theta_epsilon: float = 2.5

    def __post_init__(self):
        for name in ("kappa", "theta_sigma", "theta_xi", "theta_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class SiteData:
    """Declustered observations for ``K`` sites over ``T`` periods.

    Missing entries of ``values`` are NaN; ``mask`` is True where a value was
    observed. ``distances`` are rescaled so the largest off-diagonal entry is
    1; ``distance_scale`` holds the factor that was divided out.
    """

    values: np.ndarray
    distances: np.ndarray
    adjacency: tuple
    thresholds: np.ndarray
    dep_threshold: float = 0.95
    locations: np.ndarray | None = None
    site_ids: tuple = ()
    distance_scale: float = 1.0
    mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2:
            raise ValueError("values must be a K x T matrix")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", _frozen(~np.isnan(values), bool))
        object.__setattr__(self, "distances", _frozen(self.distances))
        object.__setattr__(self, "thresholds", _frozen(self.thresholds))
        pairs = tuple(sorted({(min(int(a), int(b)), max(int(a), int(b))) for a, b in self.adjacency}))
        object.__setattr__(self, "adjacency", pairs)
        if self.locations is not None:
            object.__setattr__(self, "locations", _frozen(self.locations))
        if not self.site_ids:
            object.__setattr__(self, "site_ids", tuple(str(k + 1) for k in range(values.shape[0])))
        else:
            object.__setattr__(self, "site_ids", tuple(str(s) for s in self.site_ids))
        problems = check_site_data(self)
        if problems:
            raise ValueError("invalid site data: " + "; ".join(problems))

    @classmethod
    def build(cls, values, distances, adjacency, thresholds, dep_threshold=0.95,
              locations=None, site_ids=(), rescale=True):
        """Construct from raw distances, rescaling them to a maximum of 1."""
        d = np.array(distances, dtype=float)
        scale = 1.0
        if rescale:
            off = d[~np.eye(d.shape[0], dtype=bool)]
            scale = float(off.max()) if off.size else 1.0
            if scale > 0:
                d = d / scale
            else:
                scale = 1.0
        return cls(values=values, distances=d, adjacency=tuple(adjacency), thresholds=thresholds,
                   dep_threshold=dep_threshold, locations=locations, site_ids=tuple(site_ids),
                   distance_scale=scale)

    @property
    def n_sites(self):
        return self.values.shape[0]

    @property
    def n_periods(self):
        return self.values.shape[1]

    def neighbours(self):
        nb = [[] for _ in range(self.n_sites)]
        for a, b in self.adjacency:
            nb[a].append(b)
            nb[b].append(a)
        return [np.array(sorted(x), dtype=np.int64) for x in nb]


def check_site_data(data):
    """Return a list of human-readable invariant violations (empty if none)."""
    out = []
    K = data.values.shape[0]
    d = data.distances
    if d.shape != (K, K):
        return [f"distance matrix has shape {d.shape}, expected ({K}, {K})"]
    if not np.all(np.isfinite(d)):
        out.append("distance matrix has non-finite entries")
    if np.any(d < 0):
        k, k2 = np.argwhere(d < 0)[0]
        out.append(f"negative distance d[{k + 1},{k2 + 1}]={d[k, k2]}")
    asym = np.abs(d - d.T) > 1e-12 * max(1.0, float(np.nanmax(np.abs(d))))
    if asym.any():
        k, k2 = np.argwhere(asym)[0]
        out.append(f"distance matrix not symmetric at ({k + 1},{k2 + 1}): {d[k, k2]} != {d[k2, k]}")
    if np.any(np.diag(d) != 0):
        k = int(np.flatnonzero(np.diag(d) != 0)[0])
        out.append(f"non-zero diagonal distance at site {k + 1}")
    if K > 1 and np.nanmax(d) > 1 + 1e-12:
        out.append(f"distances not scaled to max 1 (max {np.nanmax(d)})")
    for a, b in data.adjacency:
        if a == b:
            out.append(f"adjacency pair ({a + 1},{b + 1}) is reflexive")
        elif not (0 <= a < K and 0 <= b < K):
            out.append(f"adjacency pair ({a + 1},{b + 1}) references an unknown site")
        elif not d[a, b] > 0:
            out.append(f"adjacent sites ({a + 1},{b + 1}) have zero distance")
    if data.thresholds.shape != (K,):
        out.append(f"thresholds have length {data.thresholds.shape}, expected {K}")
    if not 0 <= data.dep_threshold < 1:
        out.append(f"dependence threshold {data.dep_threshold} outside [0, 1)")
    return out


@dataclass(frozen=True)
class ClusterState:
    """One point of the sampler's state space.

    With ``J == 1`` the dependence model has the single rate of the one
    cluster; it is stored in ``gamma0`` with ``epsilon == [0]``. ``centres`` is
    None for fixed-partition runs where labels need not come from centres.
    """

    centres: np.ndarray | None
    labels: np.ndarray
    sigma: np.ndarray
    xi: np.ndarray
    gamma0: float
    epsilon: np.ndarray
    beta: float
    hyper: Hyperparameters

    def __post_init__(self):
        if self.centres is not None:
            object.__setattr__(self, "centres", _frozen(self.centres, np.int64))
        object.__setattr__(self, "labels", _frozen(self.labels, np.int64))
        for name in ("sigma", "xi", "epsilon"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "gamma0", float(self.gamma0))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def J(self):
        return int(self.sigma.shape[0])

    @property
    def gamma(self):
        return gamma_per_cluster(self.gamma0, self.epsilon)


def gamma_per_cluster(gamma0, epsilon):
    return np.exp(np.log(gamma0) - np.asarray(epsilon, dtype=float))


def assign_labels(centres, distances):
    """Label every site with the index of its nearest centre.

    Ties go to the lowest cluster index.
    """
    c = np.asarray(centres, dtype=np.int64)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("centre vector must be non-empty")
    K = distances.shape[0]
    if c.min() < 0 or c.max() >= K:
        raise ValueError("centre index out of range")
    if np.unique(c).size != c.size:
        raise ValueError("duplicate centres")
    d = np.ascontiguousarray(distances, dtype=float)
    return kernels.assign_labels(d, np.ascontiguousarray(c))


def label_ties(centres, distances, atol=0.0):
    """Sites whose nearest-centre distance is attained by more than one centre."""
    d = np.asarray(distances)[:, np.asarray(centres)]
    dmin = d.min(axis=1, keepdims=True)
    return np.flatnonzero((d <= dmin + atol).sum(axis=1) > 1)


@dataclass
class StateReport:
    violations: list
    ties: list

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_state(state, data):
    """Collect every invariant violation of ``state`` against ``data``; never raises."""
    v = []
    K = data.n_sites
    J = state.J
    if J < 1:
        v.append("no clusters")
    for name in ("xi", "epsilon"):
        if getattr(state, name).shape != (J,):
            v.append(f"{name} has length {getattr(state, name).shape[0]}, expected {J}")
    if state.labels.shape != (K,):
        v.append(f"labels have length {state.labels.shape[0]}, expected {K}")
    elif state.labels.min() < 0 or state.labels.max() >= J:
        v.append("labels outside 1..J")
    elif np.unique(state.labels).size != J:
        v.append("empty cluster")
    ties = []
    if state.centres is not None:
        c = state.centres
        if c.shape != (J,):
            v.append(f"centre vector has length {c.shape[0]}, expected {J}")
        elif np.unique(c).size != J:
            v.append("duplicate centres")
        elif c.min() < 0 or c.max() >= K:
            v.append("centre index out of range")
        elif state.labels.shape == (K,):
            if not np.array_equal(assign_labels(c, data.distances), state.labels):
                v.append("labels/centres mismatch")
            ties = [f"site {k + 1} is equidistant to several centres"
                    for k in label_ties(c, data.distances)]
    if not np.all(np.isfinite(state.sigma)) or np.any(state.sigma <= 0):
        v.append("sigma not positive")
    if not np.all(np.isfinite(state.xi)):
        v.append("xi not finite")
    if np.any(state.epsilon < 0) or not np.all(np.isfinite(state.epsilon)):
        v.append("epsilon negative")
    if J == 1 and state.epsilon.shape == (1,) and state.epsilon[0] != 0:
        v.append("epsilon must be 0 when J = 1")
    if not (np.isfinite(state.gamma0) and state.gamma0 > 0):
        v.append("gamma0 not positive")
    if not (np.isfinite(state.beta) and state.beta > 0):
        v.append("beta not positive")
    return StateReport(v, ties)


@dataclass(frozen=True)
class DependenceCounts:
    """Joint-exceedance counts for ordered adjacent pairs.

    ``pairs[i] = (k, k2)``: ``Q[i]`` counts times where site ``k2`` exceeds
    its dependence quantile and site ``k`` is observed, ``P[i]`` the subset of
    those where site ``k`` exceeds too.
    """

    pairs: np.ndarray
    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        pairs = _frozen(np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2), np.int64)
        P = _frozen(self.P, np.int64)
        Q = _frozen(self.Q, np.int64)
        if not (P.shape == Q.shape == (pairs.shape[0],)):
            raise ValueError("pairs, P and Q must have matching lengths")
        if np.any(P < 0) or np.any(P > Q):
            raise ValueError("counts must satisfy 0 <= P <= Q")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        have = {(int(a), int(b)) for a, b in pairs}
        missing = [(a, b) for a, b in have if (b, a) not in have]
        if missing:
            a, b = missing[0]
            raise ValueError(f"pair ({a + 1},{b + 1}) present without its reverse orientation")

    def as_dict(self):
        return {(int(a), int(b)): (int(p), int(q)) for (a, b), p, q in zip(self.pairs, self.P, self.Q)}
