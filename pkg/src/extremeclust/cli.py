"""Command-line front end: simulate, preprocess, sample, summarize, check."""
from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__, io, posterior, simgen
from .data_model import SiteData, check_site_data
from .marginal import MIN_EXCEEDANCES
from .preprocess import (decluster_all, dependence_counts, empirical_threshold, standardize,
                         voronoi_adjacency)
from .priors import PriorSpec
from .rjmcmc import ChainConfig, MoveConfig, run_chain
from .trace import TraceStore

log = logging.getLogger("extremeclust")

THREADS_ENV = "EXTREMECLUST_THREADS"


class CLIError(Exception):
    pass


# ----- dataset assembly -----------------------------------------------------


def _raw_inputs(cfg):
    """Read the raw files named by ``cfg`` without validating them."""
    series = io.read_series(cfg.series)
    ids = [s.site_id for s in series]
    values = decluster_all(series, cfg.period_length)
    if cfg.standardize:
        values = np.vstack([standardize(v) for v in values])
    locations = None
    if cfg.locations is not None:
        loc_ids, xy = io.read_locations(cfg.locations)
        pos = {s: i for i, s in enumerate(loc_ids)}
        missing = [s for s in ids if s not in pos]
        if missing:
            raise CLIError(f"{cfg.locations}: no location for site {missing[0]}")
        locations = xy[[pos[s] for s in ids]]
    if cfg.distances is not None:
        distances = io.read_matrix(cfg.distances)
    else:
        distances = np.linalg.norm(locations[:, None, :] - locations[None, :, :], axis=-1)
    if distances.shape[0] != len(ids):
        raise CLIError(f"distance matrix is {distances.shape[0]}x{distances.shape[0]} "
                       f"but the series name {len(ids)} sites")
    if cfg.adjacency is not None:
        adjacency = io.read_adjacency(cfg.adjacency)
    elif locations is not None:
        adjacency = voronoi_adjacency(locations)
    else:
        raise CLIError("need [data] adjacency or locations")
    thresholds = np.empty(len(ids))
    for k, row in enumerate(values):
        if cfg.threshold is not None:
            thresholds[k] = cfg.threshold
        else:
            try:
                thresholds[k] = empirical_threshold(row, cfg.threshold_prob)
            except ValueError as e:
                raise CLIError(f"site {ids[k]}: {e}") from None
    return SimpleNamespace(ids=ids, values=values, distances=distances, adjacency=adjacency,
                           thresholds=thresholds, locations=locations)


def load_dataset(cfg):
    """Build validated :class:`SiteData` and dependence counts from a config."""
    raw = _raw_inputs(cfg)
    data = SiteData.build(raw.values, raw.distances, raw.adjacency, raw.thresholds,
                          dep_threshold=cfg.dep_threshold, locations=raw.locations,
                          site_ids=raw.ids)
    counts = io.read_counts(cfg.counts) if cfg.counts is not None else dependence_counts(data)
    return data, counts


def check_report(cfg):
    """All data invariants as a list of messages (empty when clean)."""
    problems = []
    try:
        raw = _raw_inputs(cfg)
    except (CLIError, ValueError, OSError) as e:
        return [str(e)]
    K = len(raw.ids)
    off = raw.distances[~np.eye(K, dtype=bool)]
    scale = off.max() if off.size and off.max() > 0 else 1.0
    view = SimpleNamespace(values=raw.values, distances=raw.distances / scale,
                           adjacency=tuple(raw.adjacency), thresholds=raw.thresholds,
                           dep_threshold=cfg.dep_threshold, mask=~np.isnan(raw.values))
    problems += check_site_data(view)
    for k, sid in enumerate(raw.ids):
        n = int(np.sum(raw.values[k][~np.isnan(raw.values[k])] > raw.thresholds[k]))
        if n < MIN_EXCEEDANCES:
            problems.append(f"site {sid}: only {n} exceedances of threshold {raw.thresholds[k]:g}")
    if problems:
        return problems
    data = SiteData.build(raw.values, raw.distances, raw.adjacency, raw.thresholds,
                          dep_threshold=cfg.dep_threshold, site_ids=raw.ids)
    counts = io.read_counts(cfg.counts) if cfg.counts is not None else dependence_counts(data)
    adj = set(data.adjacency)
    have = set()
    for (a, b), q in zip(counts.pairs, counts.Q):
        if (min(a, b), max(a, b)) not in adj:
            problems.append(f"counts pair ({a + 1},{b + 1}) is not adjacent")
        if q == 0:
            problems.append(f"pair ({a + 1},{b + 1}) has Q = 0")
        have.add((min(a, b), max(a, b)))
    for a, b in sorted(adj - have):
        problems.append(f"adjacent pair ({a + 1},{b + 1}) has no counts")
    return problems


# ----- config helpers -------------------------------------------------------


def chain_config(cfg, seed=None):
    spec = PriorSpec.with_sd_reading() if cfg.xi_mean_prior == "sd" else PriorSpec()
    return ChainConfig(n_iterations=cfg.iterations, burn_in=cfg.burn_in, thin=cfg.thin,
                       seed=cfg.seed if seed is None else seed,
                       initial_clusters=cfg.initial_clusters,
                       initial_centre_fraction=cfg.initial_centre_fraction, prior=spec)


def move_config(cfg):
    try:
        return MoveConfig(**cfg.moves)
    except TypeError as e:
        raise CLIError(f"[moves]: {e}") from None


def lambda_u(cfg):
    if cfg.lambda_u is not None:
        return cfg.lambda_u
    if cfg.periods_per_year is not None:
        if cfg.threshold_prob is None:
            raise CLIError("[returns] periods_per_year needs [preprocess] threshold_prob")
        return posterior.exceedance_rate(cfg.periods_per_year, cfg.threshold_prob)
    return None


def n_threads():
    v = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(v)
    except ValueError:
        raise CLIError(f"{THREADS_ENV} must be an integer, got {v!r}") from None
    return max(1, n)


def _run_one(args):
    data, counts, ccfg, moves, path = args
    return run_chain(data, counts, ccfg, moves, trace_path=path)


# ----- outputs --------------------------------------------------------------


def write_summaries(trace, out, site_ids, thresholds=None, lam=None, taus=()):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    S = posterior.similarity_matrix(trace)
    io.write_matrix(out / "similarity.csv", S)
    pe = posterior.point_estimate(trace)
    io.write_rows(out / "partition.csv", ["site_id", "cluster"],
                  [[s, int(c) + 1] for s, c in zip(site_ids, pe.labels)])
    m = posterior.marginal_table(trace)
    header = ["site_id", "psi_med", "psi_lo", "psi_hi", "nu_med", "nu_lo", "nu_hi", "psi_mean", "nu_mean"]
    io.write_rows(out / "marginals.csv", header,
                  [[s] + [repr(float(x)) for x in row] for s, row in zip(site_ids, m)])
    vals, p = posterior.posterior_J(trace)
    io.write_rows(out / "posterior_J.csv", ["J", "probability"],
                  [[int(v), repr(float(q))] for v, q in zip(vals, p)])
    if thresholds is not None and lam is not None:
        rl = posterior.return_level_summary(trace, thresholds, lam, taus)
        rows = []
        for k, s in enumerate(site_ids):
            for i, tau in enumerate(taus):
                rows.append([s, repr(float(tau))] + [repr(float(x)) for x in rl[k, i]])
        io.write_rows(out / "return_levels.csv", ["site_id", "tau", "median", "lo", "hi"], rows)
    return pe


def _pooled(traces):
    if len(traces) == 1:
        return traces[0]
    pooled = TraceStore(traces[0].n_sites)
    for t in traces:
        pooled.extend(t)
    return pooled


# ----- subcommands ----------------------------------------------------------


def cmd_simulate(a):
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    sd = simgen.simulate_study(a.study, a.seed, dependent=a.dependent, n_exc=a.n_exc, Q=a.q, rho=a.rho)
    d = sd.data
    ids = list(d.site_ids)
    io.write_series(out / "series.csv", ids, np.arange(d.n_periods), d.values)
    io.write_matrix(out / "distances.csv", d.distances)
    io.write_adjacency(out / "adjacency.csv", d.adjacency)
    io.write_locations(out / "locations.csv", ids, d.locations)
    io.write_counts(out / "counts.csv", sd.counts)
    io.write_rows(out / "truth.csv", ["site_id", "true_cluster"],
                  [[s, int(z) + 1] for s, z in zip(ids, sd.truth)])
    io.write_config(out / "config.ini", {
        "data": {"series": "series.csv", "distances": "distances.csv", "adjacency": "adjacency.csv",
                 "locations": "locations.csv", "counts": "counts.csv"},
        "preprocess": {"period_length": 1, "threshold": 0.0},
        "sampler": {"iterations": 1_000_000, "burn_in": 500_000, "thin": 100, "seed": a.seed},
        "returns": {"lambda_u": 1.0, "taus": "10, 50, 100"},
        "output": {"dir": "results"},
    })
    print(f"wrote study {a.study} dataset to {out}")
    return 0


def cmd_preprocess(a):
    cfg = io.load_config(a.config)
    data, counts = load_dataset(cfg)
    out = Path(a.out) if a.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    ids = list(data.site_ids)
    io.write_series(out / "declustered.csv", ids, np.arange(data.n_periods), data.values)
    io.write_rows(out / "thresholds.csv", ["site_id", "threshold"],
                  [[s, repr(float(u))] for s, u in zip(ids, data.thresholds)])
    io.write_adjacency(out / "adjacency.csv", data.adjacency)
    io.write_counts(out / "counts.csv", counts)
    print(f"{data.n_sites} sites, {data.n_periods} periods, {len(data.adjacency)} adjacent pairs -> {out}")
    return 0


def cmd_sample(a):
    cfg = io.load_config(a.config)
    if a.iterations is not None:
        cfg.iterations = a.iterations
        cfg.burn_in = a.burn_in if a.burn_in is not None else cfg.iterations // 2
    if a.seed is not None:
        cfg.seed = a.seed
    out = Path(a.out) if a.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    data, counts = load_dataset(cfg)
    moves = move_config(cfg)
    lam = lambda_u(cfg)
    n_chains = max(1, cfg.chains)
    seeds = [cfg.seed + i for i in range(n_chains)]
    paths = [out / ("trace.csv" if i == 0 else f"trace_chain{i + 1}.csv") for i in range(n_chains)]
    jobs = [(data, counts, chain_config(cfg, s), moves, p) for s, p in zip(seeds, paths)]
    workers = min(n_threads(), n_chains)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            traces = list(ex.map(_run_one, jobs))
    else:
        traces = [_run_one(j) for j in jobs]
    io.write_rows(out / "thresholds.csv", ["site_id", "threshold"],
                  [[s, repr(float(u))] for s, u in zip(data.site_ids, data.thresholds)])
    io.write_config(out / "run.ini", {
        "run": {"config": cfg.path.resolve(), "seeds": ",".join(map(str, seeds)),
                "iterations": cfg.iterations, "burn_in": cfg.burn_in, "thin": cfg.thin,
                "lambda_u": lam, "taus": ",".join(repr(t) for t in cfg.taus), "version": __version__},
    })
    pe = write_summaries(_pooled(traces), out, list(data.site_ids), data.thresholds, lam, cfg.taus)
    print(f"{n_chains} chain(s), {sum(len(t) for t in traces)} retained samples; "
          f"point estimate has {pe.n_clusters} cluster(s) -> {out}")
    return 0


def cmd_summarize(a):
    trace_path = Path(a.trace)
    trace = TraceStore.read_csv(trace_path)
    base = trace_path.parent
    site_ids = [str(k + 1) for k in range(trace.n_sites)]
    thresholds = lam = None
    taus = ()
    if (base / "thresholds.csv").is_file():
        site_ids, thresholds = io.read_site_values(base / "thresholds.csv", "threshold")
    if (base / "run.ini").is_file():
        cp = configparser.ConfigParser()
        cp.read(base / "run.ini")
        r = cp["run"] if cp.has_section("run") else {}
        if "lambda_u" in r:
            lam = float(r["lambda_u"])
        if "taus" in r:
            taus = tuple(float(x) for x in r["taus"].split(","))
    if a.lambda_u is not None:
        lam = a.lambda_u
    if a.taus:
        taus = tuple(float(x) for x in a.taus.split(","))
    if len(site_ids) != trace.n_sites:
        raise CLIError(f"thresholds.csv has {len(site_ids)} sites but the trace has {trace.n_sites}")
    if thresholds is None or lam is None or not taus:
        log.warning("no thresholds/lambda_u/taus available; return_levels.csv not written")
    pe = write_summaries(trace, a.out, site_ids, thresholds, lam, taus)
    print(f"{len(trace)} samples; point estimate has {pe.n_clusters} cluster(s) -> {a.out}")
    return 0


def cmd_check(a):
    cfg = io.load_config(a.config)
    problems = check_report(cfg)
    if problems:
        for p in problems:
            print(p)
        return 1
    print("ok")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="extremeclust", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic study dataset")
    s.add_argument("--study", type=int, choices=(1, 2, 3), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--dependent", action="store_true", help="Gaussian-copula margins (study 3)")
    s.add_argument("--n-exc", type=int, default=100)
    s.add_argument("--q", type=int, default=20)
    s.add_argument("--rho", type=float, default=0.5)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("preprocess", help="decluster, threshold and count joint exceedances")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("sample", help="run the sampler and write trace + summaries")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--iterations", type=int)
    s.add_argument("--burn-in", type=int)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("summarize", help="summaries from an existing trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--lambda-u", type=float)
    s.add_argument("--taus")
    s.set_defaults(func=cmd_summarize)

    s = sub.add_parser("check", help="validate inputs without sampling")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, ValueError, OSError, KeyError, configparser.Error, RuntimeError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"extremeclust: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
