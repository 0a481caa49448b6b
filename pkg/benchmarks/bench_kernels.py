"""Compiled vs pure-numpy kernels, and end-to-end sampler speed under each backend.

    python benchmarks/bench_kernels.py [--iterations 20000]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from extremeclust import _kernels_py
from extremeclust.dependence import PairTable, _log_gamma
from extremeclust.simgen import simulate_study

try:
    from extremeclust import _kernels
except ImportError:
    _kernels = None

SAMPLER_SNIPPET = """
import time
from extremeclust import BACKEND
from extremeclust.rjmcmc import ChainConfig, run_chain
from extremeclust.simgen import simulate_study
sd = simulate_study(3, 0)
cfg = ChainConfig(n_iterations={n}, burn_in={n} // 2, thin=100, seed=1)
run_chain(sd.data, sd.counts, ChainConfig(n_iterations=2000, burn_in=0, seed=1))
t = time.perf_counter()
run_chain(sd.data, sd.counts, cfg)
print(BACKEND, (time.perf_counter() - t) / {n} * 1e6)
"""


def kernel_cases():
    rng = np.random.default_rng(0)
    sd = simulate_study(3, 0)
    y = np.ascontiguousarray(sd.data.values[sd.truth == 0].ravel())
    tab = PairTable.build(sd.counts, sd.data.distances)
    labels = np.ascontiguousarray(sd.truth, dtype=np.int64)
    lg = _log_gamma(3.0, [0.4, 0.4, 0.4])
    dist = np.ascontiguousarray(sd.data.distances)
    centres = np.array([2, 7, 18], dtype=np.int64)
    big = rng.exponential(2.0, 2000)
    return {
        "gpd_loglik (n=%d)" % y.size: lambda m: m.gpd_loglik(y, 2.0, 0.1),
        "log1p_sum (n=2000)": lambda m: m.log1p_sum(big, 0.05),
        "dep_loglik (%d pairs)" % len(tab): lambda m: m.dep_loglik(
            tab.ii, tab.jj, tab.d, tab.p1, tab.q1, tab.p2, tab.q2, tab.lc1, tab.lc2, labels, lg,
            float(np.log(3.0)), 10.0),
        "assign_labels (K=20, J=3)": lambda m: m.assign_labels(dist, centres),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=20000)
    a = ap.parse_args()
    print(f"{'kernel':28s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for name, f in kernel_cases().items():
        tp = min(timeit.repeat(lambda: f(_kernels_py), number=a.repeat, repeat=3)) / a.repeat * 1e6
        if _kernels is None:
            print(f"{name:28s} {tp:10.2f} {'n/a':>10s}")
            continue
        assert np.allclose(f(_kernels_py), f(_kernels), rtol=1e-10)
        tc = min(timeit.repeat(lambda: f(_kernels), number=a.repeat, repeat=3)) / a.repeat * 1e6
        print(f"{name:28s} {tp:10.2f} {tc:10.2f} {tp / tc:7.1f}x")
    print(f"\nsampler, study 3 data, {a.iterations} iterations (us/iteration):")
    for pure in ("1", ""):
        env = dict(os.environ, EXTREMECLUST_PURE_PYTHON=pure)
        if not pure:
            env.pop("EXTREMECLUST_PURE_PYTHON")
        r = subprocess.run([sys.executable, "-c", SAMPLER_SNIPPET.format(n=a.iterations)],
                           env=env, capture_output=True, text=True, check=True)
        backend, us = r.stdout.split()
        print(f"  {backend:8s} {float(us):8.1f}")


if __name__ == "__main__":
    main()
