import numpy as np
import pytest
from scipy import integrate, stats

from extremeclust.data_model import ClusterState, Hyperparameters
from extremeclust.priors import (DEFAULT_PRIOR, PriorSpec, gibbs_hyper, log_centre_prior, log_prior,
                                 lognorm_logpdf)


def _state(J=3, sigma=None, eps=None, hyper=None):
    return ClusterState(np.arange(J), np.arange(J), np.full(J, 2.0) if sigma is None else sigma,
                        np.full(J, 0.1), 3.0, np.full(J, 0.3) if eps is None else eps, 10.0,
                        hyper or Hyperparameters(kappa=2.0))


def test_negative_epsilon_is_minus_inf():
    assert log_prior(_state(eps=np.array([0.2, -0.1, 0.3])), 20) == -np.inf


def test_support_is_finite_inside():
    assert np.isfinite(log_prior(_state(), 20))
    assert log_prior(_state(sigma=np.array([1.0, -1.0, 1.0])), 20) == -np.inf


def test_centre_prior_single_centre():
    assert log_centre_prior(1, 20) == pytest.approx(-np.log(20))
    assert log_centre_prior(3, 20) == pytest.approx(-np.log(20 * 19 * 18))


def test_sigma_term_isolated():
    a = _state(sigma=np.array([2.0, 2.0, 2.0]))
    b = _state(sigma=np.array([3.5, 2.0, 2.0]))
    h = a.hyper
    expect = lognorm_logpdf(3.5, h.mu_sigma, h.theta_sigma) - lognorm_logpdf(2.0, h.mu_sigma, h.theta_sigma)
    assert log_prior(b, 20) - log_prior(a, 20) == pytest.approx(expect, rel=1e-12)
    # second argument is a variance
    assert lognorm_logpdf(3.5, 0.2, 0.3) == pytest.approx(stats.lognorm.logpdf(3.5, np.sqrt(0.3), scale=np.exp(0.2)))


def test_poisson_term():
    a = log_prior(_state(J=2, eps=np.array([0.3, 0.3])), 20)
    b = log_prior(_state(J=3), 20)
    h = Hyperparameters(kappa=2.0)
    expect = (stats.poisson.logpmf(2, 2.0) - stats.poisson.logpmf(1, 2.0) + np.log(1 / 18)
              + stats.lognorm.logpdf(2.0, np.sqrt(h.theta_sigma), scale=np.exp(h.mu_sigma))
              + stats.norm.logpdf(0.1, h.mu_xi, np.sqrt(h.theta_xi)) + stats.expon.logpdf(0.3, scale=1 / h.theta_epsilon))
    assert b - a == pytest.approx(expect, rel=1e-10)


def test_single_cluster_has_no_offset_term():
    s = ClusterState(np.array([0]), np.zeros(3, int), [2.0], [0.1], 3.0, [0.0], 10.0, Hyperparameters())
    assert np.isfinite(log_prior(s, 3))
    s = ClusterState(np.array([0]), np.zeros(3, int), [2.0], [0.1], 3.0, [0.5], 10.0, Hyperparameters())
    assert log_prior(s, 3) == -np.inf


def test_kappa_conjugate_J1():
    rng = np.random.default_rng(0)
    s = ClusterState(np.array([0]), np.zeros(3, int), [2.0], [0.1], 3.0, [0.0], 10.0, Hyperparameters())
    k = np.array([gibbs_hyper(s, rng).kappa for _ in range(20000)])
    assert k.mean() == pytest.approx(1 / 1.001, abs=3 * 1 / np.sqrt(20000) * 1.0)


def test_theta_eps_with_zero_offsets():
    rng = np.random.default_rng(1)
    J = 4
    s = _state(J=J, eps=np.zeros(J))
    t = np.array([gibbs_hyper(s, rng).theta_epsilon for _ in range(20000)])
    mean = (5 + J) / 2
    assert abs(t.mean() - mean) < 3 * np.sqrt((5 + J) / 4) / np.sqrt(20000)


def test_mu_sigma_posterior_mean():
    rng = np.random.default_rng(2)
    sig = np.array([1.5, 2.0, 3.0, 2.5])
    h = Hyperparameters(theta_sigma=0.2)
    s = _state(J=4, sigma=sig, eps=np.full(4, 0.3), hyper=h)
    draws = np.array([gibbs_hyper(s, rng).mu_sigma for _ in range(40000)])
    pv = 1 / (1 + 4 / 0.2)
    pm = pv * np.log(sig).sum() / 0.2
    assert abs(draws.mean() - pm) < 4 * np.sqrt(pv / 40000)
    assert draws.var() == pytest.approx(pv, rel=0.03)


def _grid_check(draws, logdens, lo, hi):
    """Compare the empirical mean of draws with the grid-normalised full conditional."""
    x = np.linspace(lo, hi, 20001)
    w = np.exp(logdens(x) - logdens(x).max())
    Z = integrate.trapezoid(w, x)
    m = integrate.trapezoid(x * w, x) / Z
    v = integrate.trapezoid((x - m) ** 2 * w, x) / Z
    return m, v


def test_full_conditionals_against_grid():
    """theta_xi and theta_sigma conditionals (prior x likelihood on a grid) match the Gibbs draws."""
    rng = np.random.default_rng(3)
    xi = np.array([0.1, -0.05, 0.3])
    h = Hyperparameters(mu_xi=0.05, theta_xi=0.04)
    s = ClusterState(np.arange(3), np.arange(3), [2.0, 2.0, 2.0], xi, 3.0, [0.3] * 3, 10.0, h)
    # mu_xi | theta_xi: exact normal; theta_xi is drawn after mu_xi, so check mu_xi first
    draws = np.array([gibbs_hyper(s, rng).mu_xi for _ in range(40000)])
    ld = lambda m: stats.norm.logpdf(m, 0, np.sqrt(0.2)) + stats.norm.logpdf(xi[:, None], m, np.sqrt(0.04)).sum(0)
    gm, gv = _grid_check(draws, ld, -2, 2)
    assert abs(draws.mean() - gm) < 4 * np.sqrt(gv / draws.size)
    assert draws.var() == pytest.approx(gv, rel=0.03)
    # theta_sigma | mu_sigma, with mu_sigma fixed by a degenerate prior
    spec = PriorSpec(mu_sigma_var=1e-14)
    sig = np.array([1.5, 2.0, 3.0])
    s = ClusterState(np.arange(3), np.arange(3), sig, xi, 3.0, [0.3] * 3, 10.0, h)
    draws = np.array([gibbs_hyper(s, rng, spec).theta_sigma for _ in range(40000)])
    ls = np.log(sig)
    ld = lambda t: (stats.invgamma.logpdf(t, 1, scale=0.1)
                    + stats.norm.logpdf(ls[:, None], 0.0, np.sqrt(t)).sum(0))
    gm, gv = _grid_check(draws, ld, 1e-4, 50)
    assert abs(draws.mean() - gm) < 4 * np.sqrt(gv / draws.size)
    assert np.median(draws) == pytest.approx(stats.invgamma.median(1 + 1.5, scale=0.1 + 0.5 * (ls ** 2).sum()), rel=0.02)


def test_sd_reading_switch():
    assert PriorSpec.with_sd_reading().mu_xi_var == pytest.approx(0.04)
    assert DEFAULT_PRIOR.mu_xi_var == 0.2


def test_initial_hyper():
    h = DEFAULT_PRIOR.initial_hyper()
    assert h.kappa == 1000 and h.theta_epsilon == 2.5 and h.theta_sigma == pytest.approx(0.05)
