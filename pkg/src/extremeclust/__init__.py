"""Bayesian spatial clustering of extremes with reversible-jump MCMC."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
