"""CSV and config file formats.

External files use 1-based site indices; everything returned here is
0-based. Writers go through a temporary file and an atomic rename.
"""
from __future__ import annotations

import configparser
import csv
import datetime as _dt
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import DependenceCounts
from .preprocess import RawSeries


@contextmanager
def atomic_open(path, mode="w"):
    path = str(path)
    tmp = f"{path}.part"
    fh = open(tmp, mode, newline="")
    try:
        yield fh
    except BaseException:
        fh.close()
        os.unlink(tmp)
        raise
    fh.close()
    os.replace(tmp, path)


def write_rows(path, header, rows):
    with atomic_open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


def _read_rows(path):
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]


def _parse_time(s, path, n):
    s = s.strip()
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return _dt.date.fromisoformat(s).toordinal()
    except ValueError:
        raise ValueError(f"{path}:{n}: cannot parse time {s!r} (integer or ISO date expected)") from None


def read_series(path):
    """``site_id,time,value`` rows -> list of :class:`RawSeries` in order of first appearance.

    An empty value is a missing observation.
    """
    rows = _read_rows(path)
    if not rows or [c.strip() for c in rows[0][:3]] != ["site_id", "time", "value"]:
        raise ValueError(f"{path}: expected header site_id,time,value")
    by_site = {}
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ValueError(f"{path}:{n}: expected 3 fields, got {len(row)}")
        sid = row[0].strip()
        t = _parse_time(row[1], path, n)
        v = row[2].strip()
        try:
            val = float(v) if v else np.nan
        except ValueError:
            raise ValueError(f"{path}:{n}: bad value {v!r}") from None
        by_site.setdefault(sid, []).append((t, val))
    out = []
    for sid, obs in by_site.items():
        obs.sort(key=lambda x: x[0])
        t = np.array([o[0] for o in obs], dtype=np.int64)
        if np.any(np.diff(t) == 0):
            raise ValueError(f"{path}: duplicate time for site {sid}")
        out.append(RawSeries(sid, t, np.array([o[1] for o in obs])))
    return out


def write_series(path, site_ids, times, values):
    rows = []
    for k, sid in enumerate(site_ids):
        for t, v in zip(times, values[k]):
            rows.append([sid, int(t), "" if np.isnan(v) else _fmt(v)])
    write_rows(path, ["site_id", "time", "value"], rows)


def read_matrix(path):
    rows = _read_rows(path)
    try:
        m = np.array([[float(c) for c in r] for r in rows])
    except ValueError:
        raise ValueError(f"{path}: distance matrix must be numeric with no header") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{path}: distance matrix is not square")
    return m


def write_matrix(path, m):
    write_rows(path, None, [[_fmt(x) for x in row] for row in np.asarray(m)])


def read_adjacency(path):
    """``k,k'`` rows (1-based) -> list of 0-based pairs (not range-checked)."""
    rows = _read_rows(path)
    out = []
    for n, row in enumerate(rows, start=1):
        if n == 1 and not row[0].strip().lstrip("-").isdigit():
            continue
        if len(row) != 2:
            raise ValueError(f"{path}:{n}: expected 2 fields")
        out.append((int(row[0]) - 1, int(row[1]) - 1))
    return out


def write_adjacency(path, pairs):
    write_rows(path, ["k", "k'"], [[a + 1, b + 1] for a, b in sorted(pairs)])


def read_locations(path):
    rows = _read_rows(path)
    if not rows or [c.strip() for c in rows[0][:3]] != ["site_id", "x", "y"]:
        raise ValueError(f"{path}: expected header site_id,x,y")
    ids = [r[0].strip() for r in rows[1:]]
    xy = np.array([[float(r[1]), float(r[2])] for r in rows[1:]])
    return ids, xy


def write_locations(path, site_ids, xy):
    write_rows(path, ["site_id", "x", "y"], [[s, _fmt(x), _fmt(y)] for s, (x, y) in zip(site_ids, xy)])


def read_counts(path):
    rows = _read_rows(path)
    if not rows or [c.strip() for c in rows[0]] != ["k", "k2", "P", "Q"]:
        raise ValueError(f"{path}: expected header k,k2,P,Q")
    r = np.array([[int(c) for c in row] for row in rows[1:]], dtype=np.int64).reshape(-1, 4)
    return DependenceCounts(r[:, :2] - 1, r[:, 2], r[:, 3])


def write_counts(path, counts):
    write_rows(path, ["k", "k2", "P", "Q"],
               [[a + 1, b + 1, int(p), int(q)] for (a, b), p, q in zip(counts.pairs, counts.P, counts.Q)])


def read_site_values(path, column):
    rows = _read_rows(path)
    header = [c.strip() for c in rows[0]]
    i = header.index(column)
    return [r[0] for r in rows[1:]], np.array([float(r[i]) for r in rows[1:]])


# ----- config ---------------------------------------------------------------


@dataclass
class Config:
    """Parsed run configuration; relative paths are resolved against the config file."""

    path: Path
    series: Path | None = None
    distances: Path | None = None
    adjacency: Path | None = None
    locations: Path | None = None
    counts: Path | None = None
    period_length: int = 1
    threshold: float | None = None
    threshold_prob: float | None = 0.95
    dep_threshold: float = 0.95
    standardize: bool = False
    iterations: int = 1_000_000
    burn_in: int = 500_000
    thin: int = 100
    seed: int = 0
    initial_clusters: int | None = None
    initial_centre_fraction: float = 0.1
    chains: int = 1
    moves: dict = field(default_factory=dict)
    xi_mean_prior: str = "variance"
    lambda_u: float | None = None
    periods_per_year: float | None = None
    taus: tuple = (10.0, 25.0, 50.0, 100.0)
    out_dir: Path = Path("results")


def _path(base, v):
    if not v:
        return None
    p = Path(v)
    return p if p.is_absolute() else (base / p)


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    base = path.parent
    known = {"data", "preprocess", "prior", "sampler", "moves", "returns", "output"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ValueError(f"{path}: unknown section(s) {sorted(unknown)}")
    c = Config(path=path)
    if cp.has_section("data"):
        d = cp["data"]
        for key in ("series", "distances", "adjacency", "locations", "counts"):
            setattr(c, key, _path(base, d.get(key)))
    if cp.has_section("preprocess"):
        p = cp["preprocess"]
        c.period_length = p.getint("period_length", c.period_length)
        if "threshold" in p:
            c.threshold = p.getfloat("threshold")
            c.threshold_prob = p.getfloat("threshold_prob", fallback=None)
        else:
            c.threshold_prob = p.getfloat("threshold_prob", c.threshold_prob)
        c.dep_threshold = p.getfloat("dep_threshold", c.dep_threshold)
        c.standardize = p.getboolean("standardize", c.standardize)
    if cp.has_section("prior"):
        c.xi_mean_prior = cp["prior"].get("xi_mean_prior", c.xi_mean_prior).strip()
        if c.xi_mean_prior not in ("variance", "sd"):
            raise ValueError(f"{path}: xi_mean_prior must be 'variance' or 'sd'")
    if cp.has_section("sampler"):
        s = cp["sampler"]
        c.iterations = s.getint("iterations", c.iterations)
        c.burn_in = s.getint("burn_in", c.burn_in)
        c.thin = s.getint("thin", c.thin)
        c.seed = s.getint("seed", c.seed)
        if "initial_clusters" in s:
            c.initial_clusters = s.getint("initial_clusters")
        c.initial_centre_fraction = s.getfloat("initial_centre_fraction", c.initial_centre_fraction)
        c.chains = s.getint("chains", c.chains)
    if cp.has_section("moves"):
        c.moves = {k: float(v) for k, v in cp["moves"].items()}
    if cp.has_section("returns"):
        r = cp["returns"]
        if "lambda_u" in r:
            c.lambda_u = r.getfloat("lambda_u")
        if "periods_per_year" in r:
            c.periods_per_year = r.getfloat("periods_per_year")
        if "taus" in r:
            c.taus = tuple(float(x) for x in r["taus"].split(","))
    if cp.has_section("output"):
        c.out_dir = _path(base, cp["output"].get("dir", "results"))
    else:
        c.out_dir = base / "results"
    if c.series is None:
        raise ValueError(f"{path}: [data] series is required")
    if c.distances is None and c.locations is None:
        raise ValueError(f"{path}: need [data] distances or locations")
    return c


def write_config(path, sections):
    """Write a dict of ``{section: {key: value}}`` as an INI file."""
    cp = configparser.ConfigParser()
    for name, items in sections.items():
        cp[name] = {k: str(v) for k, v in items.items() if v is not None}
    with atomic_open(path) as fh:
        cp.write(fh)
