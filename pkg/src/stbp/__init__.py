"""Spatiotemporal Besov priors: q-exponential laws, white-noise maps, MAP and MCMC for space-time inverse problems."""

__version__ = "0.1.0"
