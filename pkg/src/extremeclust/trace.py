"""Retained posterior samples and their CSV persistence.

``trace.csv`` holds one row per retained sample. Multi-valued fields are
``;``-joined and site/cluster indices are 1-based, as in every other external
file. Floats are written with ``repr`` so a trace round-trips exactly.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

HEADER = ("iter", "J", "logpost", "centres", "labels", "sigma", "xi", "gamma0", "epsilon", "beta",
          "kappa", "mu_sigma", "theta_sigma", "mu_xi", "theta_xi", "theta_eps")
HYPER_FIELDS = ("kappa", "mu_sigma", "theta_sigma", "mu_xi", "theta_xi", "theta_epsilon")


def _floats(a):
    return ";".join(repr(float(x)) for x in a)


def _ints1(a):
    return ";".join(str(int(x) + 1) for x in a)


def format_row(it, logpost, centres, labels, sigma, xi, gamma0, epsilon, beta, hyper):
    return [str(int(it)), str(len(sigma)), repr(float(logpost)),
            "" if centres is None else _ints1(centres), _ints1(labels),
            _floats(sigma), _floats(xi), repr(float(gamma0)), _floats(epsilon), repr(float(beta))] + \
        [repr(float(getattr(hyper, f))) for f in HYPER_FIELDS]


@dataclass
class TraceStore:
    """In-memory thinned samples. ``labels`` is an ``N x K`` array of 0-based labels."""

    n_sites: int
    iters: list = field(default_factory=list)
    logpost: list = field(default_factory=list)
    centres: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    xi: list = field(default_factory=list)
    gamma0: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    hyper: list = field(default_factory=list)
    acceptance: dict = field(default_factory=dict)

    def append(self, it, logpost, centres, labels, sigma, xi, gamma0, epsilon, beta, hyper):
        self.iters.append(int(it))
        self.logpost.append(float(logpost))
        self.centres.append(None if centres is None else np.array(centres, dtype=np.int64))
        self.labels.append(np.array(labels, dtype=np.int64))
        self.sigma.append(np.array(sigma, dtype=float))
        self.xi.append(np.array(xi, dtype=float))
        self.gamma0.append(float(gamma0))
        self.epsilon.append(np.array(epsilon, dtype=float))
        self.beta.append(float(beta))
        self.hyper.append(tuple(float(getattr(hyper, f)) for f in HYPER_FIELDS))

    def __len__(self):
        return len(self.iters)

    def extend(self, other):
        """Append every sample of another store over the same sites (e.g. pooling chains)."""
        if other.n_sites != self.n_sites:
            raise ValueError("traces cover different numbers of sites")
        for name in ("iters", "logpost", "centres", "labels", "sigma", "xi", "gamma0", "epsilon",
                     "beta", "hyper"):
            getattr(self, name).extend(getattr(other, name))

    @property
    def J(self):
        return np.array([s.size for s in self.sigma], dtype=np.int64)

    def label_matrix(self):
        if not self.labels:
            return np.empty((0, self.n_sites), dtype=np.int64)
        return np.vstack(self.labels)

    def hyper_array(self):
        return np.array(self.hyper, dtype=float).reshape(-1, len(HYPER_FIELDS))

    def site_values(self, name):
        """``N x K`` array of a cluster parameter evaluated at each site's cluster."""
        vals = getattr(self, name)
        return np.vstack([v[z] for v, z in zip(vals, self.labels)])

    def posterior_J(self):
        J = self.J
        values, counts = np.unique(J, return_counts=True)
        return values, counts / J.size

    def rows(self):
        from .data_model import Hyperparameters
        for i in range(len(self)):
            h = Hyperparameters(*self.hyper[i])
            yield format_row(self.iters[i], self.logpost[i], self.centres[i], self.labels[i],
                             self.sigma[i], self.xi[i], self.gamma0[i], self.epsilon[i], self.beta[i], h)

    def write_csv(self, path):
        tmp = f"{path}.part"
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER)
            w.writerows(self.rows())
        os.replace(tmp, path)

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r, None)
            if header is None or tuple(header) != HEADER:
                raise ValueError(f"{path}: not a trace file (bad header)")
            rows = list(r)
        if not rows:
            raise ValueError(f"{path}: trace has no samples")
        K = len(rows[0][4].split(";"))
        out = cls(K)
        from .data_model import Hyperparameters

        def ints(s):
            return np.array([int(x) - 1 for x in s.split(";")], dtype=np.int64) if s else None

        def floats(s):
            return np.array([float(x) for x in s.split(";")]) if s else np.empty(0)

        for n, row in enumerate(rows, start=2):
            if len(row) != len(HEADER):
                raise ValueError(f"{path}:{n}: expected {len(HEADER)} fields, got {len(row)}")
            labels = ints(row[4])
            if labels.size != K:
                raise ValueError(f"{path}:{n}: labels have length {labels.size}, expected {K}")
            sigma = floats(row[5])
            if int(row[1]) != sigma.size:
                raise ValueError(f"{path}:{n}: J does not match the parameter vectors")
            h = Hyperparameters(*(float(x) for x in row[10:16]))
            out.append(int(row[0]), float(row[2]), ints(row[3]), labels, sigma, floats(row[6]),
                       float(row[7]), floats(row[8]), float(row[9]), h)
        return out


class TraceWriter:
    """Append-only trace file, renamed into place when the run completes."""

    def __init__(self, path, flush_every=1):
        self.path = str(path)
        self.tmp = self.path + ".part"
        self._fh = open(self.tmp, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(HEADER)
        self._n = 0
        self.flush_every = flush_every

    def write(self, row):
        self._w.writerow(row)
        self._n += 1
        if self._n % self.flush_every == 0:
            self._fh.flush()

    def close(self):
        self._fh.close()
        os.replace(self.tmp, self.path)

    def abort(self):
        self._fh.close()
