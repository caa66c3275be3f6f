"""Latent-space Bayesian optimisation with sequential domain reduction."""

__version__ = "0.1.0"
