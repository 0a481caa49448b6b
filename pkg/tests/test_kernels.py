"""The compiled kernels agree with the numpy fallback."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extremeclust import _kernels_py, kernels
from extremeclust.dependence import PairTable, _log_gamma

_kernels = pytest.importorskip("extremeclust._kernels")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5), st.floats(-0.45, 1.5))
def test_gpd_loglik_agrees(seed, sigma, xi):
    y = np.random.default_rng(seed).exponential(2.0, 50)
    a = _kernels.gpd_loglik(y, sigma, xi)
    b = _kernels_py.gpd_loglik(y, sigma, xi)
    assert a == b or np.isclose(a, b, rtol=1e-12)


@pytest.mark.parametrize("xi", [0.0, 1e-7, -1e-7, 1e-3])
def test_gpd_loglik_small_xi(xi):
    y = np.linspace(0.1, 5, 30)
    assert np.isclose(_kernels.gpd_loglik(y, 1.3, xi), _kernels_py.gpd_loglik(y, 1.3, xi), rtol=1e-12)


def test_gpd_loglik_support():
    y = np.array([1.0, 3.0])
    assert _kernels.gpd_loglik(y, 1.0, -0.5) == -np.inf == _kernels_py.gpd_loglik(y, 1.0, -0.5)
    assert _kernels.gpd_loglik(y, -1.0, 0.1) == -np.inf


def test_dep_loglik_agrees(study3, rng):
    tab = PairTable.build(study3.counts, study3.data.distances)
    for _ in range(20):
        labels = rng.integers(0, 3, 20).astype(np.int64)
        g0 = rng.exponential(3.0)
        eps = rng.exponential(0.5, 3)
        beta = rng.exponential(10.0)
        args = (tab.ii, tab.jj, tab.d, tab.p1, tab.q1, tab.p2, tab.q2, tab.lc1, tab.lc2, labels,
                _log_gamma(g0, eps), float(np.log(g0)), beta)
        assert np.isclose(_kernels.dep_loglik(*args), _kernels_py.dep_loglik(*args), rtol=1e-11)


def test_assign_and_log1p_agree(rng):
    d = rng.random((15, 15))
    d = d + d.T
    np.fill_diagonal(d, 0)
    c = np.array([4, 1, 9], dtype=np.int64)
    assert np.array_equal(_kernels.assign_labels(d, c), _kernels_py.assign_labels(d, c))
    y = rng.exponential(1, 100)
    assert np.isclose(_kernels.log1p_sum(y, 0.3), _kernels_py.log1p_sum(y, 0.3), rtol=1e-13)


def test_backend_env_override():
    code = "from extremeclust import BACKEND; print(BACKEND)"
    env = dict(os.environ, EXTREMECLUST_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("cython", "python")
