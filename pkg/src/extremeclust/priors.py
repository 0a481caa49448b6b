"""Prior densities and conjugate hyperparameter updates.

Gamma and exponential distributions are parametrised by rate, the
inverse-gamma by (shape, scale), and the second argument of every normal or
lognormal is a variance.

With a single cluster the model has no offset ``epsilon``: the one dependence
rate is stored in ``gamma0`` and carries the ``gamma0`` prior.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .data_model import Hyperparameters

LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class PriorSpec:
    gamma0_rate: float = 0.001
    beta_rate: float = 0.01
    kappa_shape: float = 1.0
    kappa_rate: float = 0.001
    mu_sigma_mean: float = 0.0
    mu_sigma_var: float = 1.0
    mu_xi_mean: float = 0.0
    mu_xi_var: float = 0.2
    theta_shape: float = 1.0
    theta_scale: float = 0.1
    theta_eps_shape: float = 5.0
    theta_eps_rate: float = 2.0

    @classmethod
    def with_sd_reading(cls, **kw):
        """Variant reading the 0.2 of the ``mu_xi`` prior as a standard deviation."""
        return cls(mu_xi_var=0.2 ** 2, **kw)

    def initial_hyper(self):
        """Hyperparameters at prior means (the inverse-gamma mean is infinite, so its mode)."""
        return Hyperparameters(
            kappa=self.kappa_shape / self.kappa_rate,
            mu_sigma=self.mu_sigma_mean,
            theta_sigma=self.theta_scale / (self.theta_shape + 1),
            mu_xi=self.mu_xi_mean,
            theta_xi=self.theta_scale / (self.theta_shape + 1),
            theta_epsilon=self.theta_eps_shape / self.theta_eps_rate,
        )


DEFAULT_PRIOR = PriorSpec()


def norm_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var


def lognorm_logpdf(x, mu, var):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.log(x)
        out = -lx - 0.5 * (LOG_2PI + np.log(var)) - 0.5 * (lx - mu) ** 2 / var
    return np.where(x > 0, out, -np.inf)


def expon_logpdf(x, rate):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, np.log(rate) - rate * x, -np.inf)


def gamma_logpdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x
    return np.where(x > 0, out, -np.inf)


def invgamma_logpdf(x, shape, scale):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * np.log(scale) - gammaln(shape) - (shape + 1) * np.log(x) - scale / x
    return np.where(x > 0, out, -np.inf)


def log_centre_prior(J, K):
    """Log-probability ``(K - J)! / K!`` of one ordered centre vector."""
    return float(gammaln(K - J + 1) - gammaln(K + 1))


def log_poisson_J(J, kappa):
    n = J - 1
    return float(n * np.log(kappa) - kappa - gammaln(n + 1))


def log_prior_sigma(sigma, hyper):
    return float(np.sum(lognorm_logpdf(sigma, hyper.mu_sigma, hyper.theta_sigma)))


def log_prior_xi(xi, hyper):
    return float(np.sum(norm_logpdf(xi, hyper.mu_xi, hyper.theta_xi)))


def log_prior_dependence(gamma0, epsilon, beta, hyper, spec=DEFAULT_PRIOR):
    epsilon = np.asarray(epsilon, dtype=float)
    out = float(expon_logpdf(gamma0, spec.gamma0_rate) + expon_logpdf(beta, spec.beta_rate))
    if not (gamma0 > 0 and beta > 0):
        return -np.inf
    if epsilon.size > 1:
        out += float(np.sum(expon_logpdf(epsilon, hyper.theta_epsilon)))
    elif epsilon.size == 1 and epsilon[0] != 0:
        return -np.inf
    return out


def log_hyperprior(hyper, spec=DEFAULT_PRIOR):
    return float(gamma_logpdf(hyper.kappa, spec.kappa_shape, spec.kappa_rate)
                 + norm_logpdf(hyper.mu_sigma, spec.mu_sigma_mean, spec.mu_sigma_var)
                 + invgamma_logpdf(hyper.theta_sigma, spec.theta_shape, spec.theta_scale)
                 + norm_logpdf(hyper.mu_xi, spec.mu_xi_mean, spec.mu_xi_var)
                 + invgamma_logpdf(hyper.theta_xi, spec.theta_shape, spec.theta_scale)
                 + gamma_logpdf(hyper.theta_epsilon, spec.theta_eps_shape, spec.theta_eps_rate))


def log_prior(state, K, spec=DEFAULT_PRIOR):
    """Joint log prior of a state, including the hyperpriors."""
    J = state.J
    h = state.hyper
    if not 1 <= J <= K:
        return -np.inf
    if np.any(np.asarray(state.epsilon) < 0):
        return -np.inf
    out = log_poisson_J(J, h.kappa) + log_centre_prior(J, K)
    out += log_prior_sigma(state.sigma, h) + log_prior_xi(state.xi, h)
    out += log_prior_dependence(state.gamma0, state.epsilon, state.beta, h, spec)
    out += log_hyperprior(h, spec)
    return float(out)


def _normal_posterior(x, var, prior_mean, prior_var, rng):
    post_var = 1.0 / (1.0 / prior_var + x.size / var)
    post_mean = post_var * (prior_mean / prior_var + x.sum() / var)
    return rng.normal(post_mean, np.sqrt(post_var))


def gibbs_hyper(state, rng, spec=DEFAULT_PRIOR):
    """One conjugate Gibbs sweep over the hyperparameters, in a fixed order."""
    J = state.J
    h = state.hyper
    kappa = rng.gamma(spec.kappa_shape + (J - 1), 1.0 / (spec.kappa_rate + 1.0))
    ls = np.log(state.sigma)
    mu_sigma = _normal_posterior(ls, h.theta_sigma, spec.mu_sigma_mean, spec.mu_sigma_var, rng)
    theta_sigma = (spec.theta_scale + 0.5 * np.sum((ls - mu_sigma) ** 2)) / rng.gamma(spec.theta_shape + J / 2)
    xi = np.asarray(state.xi)
    mu_xi = _normal_posterior(xi, h.theta_xi, spec.mu_xi_mean, spec.mu_xi_var, rng)
    theta_xi = (spec.theta_scale + 0.5 * np.sum((xi - mu_xi) ** 2)) / rng.gamma(spec.theta_shape + J / 2)
    eps = np.asarray(state.epsilon) if J > 1 else np.empty(0)
    theta_eps = rng.gamma(spec.theta_eps_shape + eps.size, 1.0 / (spec.theta_eps_rate + eps.sum()))
    return replace(h, kappa=float(kappa), mu_sigma=float(mu_sigma), theta_sigma=float(theta_sigma),
                   mu_xi=float(mu_xi), theta_xi=float(theta_xi), theta_epsilon=float(theta_eps))


def sample_sigma(hyper, rng, size=None):
    return np.exp(rng.normal(hyper.mu_sigma, np.sqrt(hyper.theta_sigma), size))


def sample_xi(hyper, rng, size=None):
    return rng.normal(hyper.mu_xi, np.sqrt(hyper.theta_xi), size)


def sample_epsilon(hyper, rng, size=None):
    return rng.exponential(1.0 / hyper.theta_epsilon, size)


def sample_gamma0(rng, spec=DEFAULT_PRIOR):
    return rng.exponential(1.0 / spec.gamma0_rate)


def sample_beta(rng, spec=DEFAULT_PRIOR):
    return rng.exponential(1.0 / spec.beta_rate)
