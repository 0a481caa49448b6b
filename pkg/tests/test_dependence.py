import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import betabinom

from extremeclust.data_model import ClusterState, DependenceCounts, Hyperparameters, SiteData
from extremeclust.dependence import (PairTable, bb_shape, betabinom_logpmf, gamma_from_epsilon,
                                     loglik_dep, pair_loglik)
from extremeclust.simgen import fixture_distances, simulate_dependence_counts


def test_gamma_from_epsilon():
    assert gamma_from_epsilon(3.0, 0.0) == pytest.approx(3.0)
    assert gamma_from_epsilon(3.0, np.log(1.5)) == pytest.approx(2.0)
    assert 0 < gamma_from_epsilon(3.0, 10.0) < 3.0


def test_bb_shape_examples():
    a, b = bb_shape(np.log(2), 1.0, 1.0)
    assert a == pytest.approx(1.0) and b == 1.0
    assert bb_shape(2.0, 0.3, 10.0)[0] == pytest.approx(10 / np.expm1(0.6), rel=1e-12)
    assert bb_shape(2.0, 0.3, 10.0)[0] == pytest.approx(12.16369, abs=5e-5)
    with pytest.raises(ValueError):
        bb_shape(2.0, 0.0, 10.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 20), st.floats(0.01, 1), st.floats(0.01, 100))
def test_bb_mean_identity(g, d, beta):
    a, b = bb_shape(g, d, beta)
    assert a / (a + b) == pytest.approx(np.exp(-g * d), rel=1e-12)


def test_bb_mean_decreasing_in_distance():
    means = [(lambda a, b: a / (a + b))(*bb_shape(2.0, d, 10.0)) for d in np.linspace(0.05, 1, 20)]
    assert np.all(np.diff(means) < 0)


def test_betabinom_examples():
    assert betabinom_logpmf(0, 0, 2.0, 3.0) == 0.0
    assert np.exp(betabinom_logpmf(1, 1, 2.0, 3.0)) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        betabinom_logpmf(3, 2, 1.0, 1.0)


@pytest.mark.parametrize("q", [1, 5, 20, 200])
def test_betabinom_sums_to_one(q):
    p = np.arange(q + 1)
    tot = np.exp(betabinom_logpmf(p, q, 5.0, 10.0)).sum()
    assert abs(tot - 1) < 1e-12


def test_betabinom_matches_scipy():
    p = np.arange(21)
    assert np.allclose(betabinom_logpmf(p, 20, 0.7, 3.2), betabinom.logpmf(p, 20, 0.7, 3.2), rtol=1e-12)


def test_betabinom_large_q_finite():
    assert np.isfinite(betabinom_logpmf(400_000, 1_000_000, 2.0, 3.0))


def _two_site(P, Q, d=0.4):
    dist = np.array([[0, d], [d, 0.0]])
    data = SiteData.build(np.ones((2, 2)), dist, [(0, 1)], np.zeros(2), rescale=False)
    return data, DependenceCounts([(0, 1), (1, 0)], P, Q)


def _state(labels, gamma0=3.0, eps=(0.4,), beta=10.0):
    J = int(np.max(labels)) + 1
    e = np.array(eps if J > 1 else (0.0,))
    return ClusterState(None, labels, np.ones(J), np.zeros(J), gamma0, e, beta, Hyperparameters())


def test_pair_loglik_symmetric_counts():
    data, counts = _two_site([7, 7], [20, 20])
    s = _state(np.array([0, 1]), eps=(0.4, 0.4))
    a, b = bb_shape(3.0, 0.4, 10.0)
    assert pair_loglik(0, 1, counts, s, 0.4) == pytest.approx(betabinom_logpmf(7, 20, a, b), rel=1e-12)


def test_pair_loglik_uses_gamma_j_within_and_gamma0_across():
    data, counts = _two_site([7, 9], [20, 18])
    same = _state(np.array([0, 0]), gamma0=3.0)
    # J=1: the single cluster's rate is gamma0
    a, b = bb_shape(3.0, 0.4, 10.0)
    hand = 0.5 * (betabinom_logpmf(7, 20, a, b) + betabinom_logpmf(9, 18, a, b))
    assert pair_loglik(0, 1, counts, same, 0.4) == pytest.approx(hand, rel=1e-12)
    # three sites: pair (0,1) in cluster 0 with gamma_0 = 3 e^-0.7
    d = np.array([[0, 0.4, 0.5], [0.4, 0, 0.3], [0.5, 0.3, 0]])
    data3 = SiteData.build(np.ones((3, 2)), d, [(0, 1), (1, 2)], np.zeros(3), rescale=False)
    counts3 = DependenceCounts([(0, 1), (1, 0), (1, 2), (2, 1)], [7, 9, 3, 4], [20, 18, 20, 20])
    st3 = _state(np.array([0, 0, 1]), gamma0=3.0, eps=(0.7, 0.2))
    a1, b1 = bb_shape(3.0 * np.exp(-0.7), 0.4, 10.0)
    within = 0.5 * (betabinom_logpmf(7, 20, a1, b1) + betabinom_logpmf(9, 18, a1, b1))
    a0, b0 = bb_shape(3.0, 0.3, 10.0)
    across = 0.5 * (betabinom_logpmf(3, 20, a0, b0) + betabinom_logpmf(4, 20, a0, b0))
    assert pair_loglik(0, 1, counts3, st3, 0.4) == pytest.approx(within, rel=1e-12)
    assert pair_loglik(1, 2, counts3, st3, 0.3) == pytest.approx(across, rel=1e-12)
    assert loglik_dep(st3, counts3, data3) == pytest.approx(within + across, rel=1e-12)


def test_eps_zero_equals_cross_cluster():
    data, counts = _two_site([7, 9], [20, 18])
    a = loglik_dep(_state(np.array([0, 1]), eps=(0.0, 0.0)), counts, data)
    b = loglik_dep(_state(np.array([0, 0])), counts, data)
    assert a == pytest.approx(b, rel=1e-14)


def test_single_pair_and_dropped_pair():
    data, counts = _two_site([7, 9], [20, 18])
    s = _state(np.array([0, 0]))
    assert loglik_dep(s, counts, data) == pytest.approx(pair_loglik(0, 1, counts, s, 0.4))
    d = np.array([[0, 0.4, 0.5], [0.4, 0, 0.3], [0.5, 0.3, 0]])
    data3 = SiteData.build(np.ones((3, 2)), d, [(0, 1), (1, 2)], np.zeros(3), rescale=False)
    counts3 = DependenceCounts([(0, 1), (1, 0), (1, 2), (2, 1)], [7, 9, 0, 0], [20, 18, 0, 0])
    assert loglik_dep(_state(np.array([0, 0, 0])), counts3, data3) == pytest.approx(
        loglik_dep(s, counts, data), rel=1e-14)


def test_one_sided_missing_orientation_half_weight():
    data, counts = _two_site([7, 0], [20, 0])
    a, b = bb_shape(3.0, 0.4, 10.0)
    assert loglik_dep(_state(np.array([0, 0])), counts, data) == pytest.approx(
        0.5 * betabinom_logpmf(7, 20, a, b), rel=1e-12)


def test_relabelling_invariance(study3):
    d = study3.data
    Z = study3.truth
    s = _state(Z, eps=(0.1, 0.5, 0.9))
    perm = np.array([2, 0, 1])
    s2 = _state(perm[Z], eps=tuple(np.array([0.1, 0.5, 0.9])[np.argsort(perm)]))
    assert loglik_dep(s, study3.counts, d) == pytest.approx(loglik_dep(s2, study3.counts, d), rel=1e-13)


def test_true_parameters_preferred():
    d = fixture_distances()
    from extremeclust.simgen import fixture_adjacency, fixture_labels
    adj = fixture_adjacency()
    Z = fixture_labels()
    data = SiteData.build(np.ones((20, 2)), d, adj, np.zeros(20))
    wins = 0
    for s in range(100):
        c = simulate_dependence_counts(Z, data.distances, adj, 3.0, [np.log(1.5)] * 3, 10.0, 20,
                                       np.random.default_rng(s))
        good = loglik_dep(_state(Z, 3.0, [np.log(1.5)] * 3), c, data)
        bad = loglik_dep(_state(Z, 3.0, [np.log(0.75)] * 3 if False else [0.0] * 3, beta=10.0), c, data)
        # gamma_j = 4 > gamma0 is outside the model; compare against gamma0 = gamma_j = 4 instead
        bad = loglik_dep(_state(Z, 4.0, [0.0] * 3), c, data)
        wins += good > bad
    assert wins >= 95


def test_pair_table_drops_q0_pairs(caplog):
    counts = DependenceCounts([(0, 1), (1, 0)], [0, 0], [0, 0])
    t = PairTable.build(counts, np.array([[0, 0.5], [0.5, 0]]))
    assert len(t) == 0 and "dropped" in caplog.text
