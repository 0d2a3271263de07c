"""Pseudospectral lab for stochastic damped Navier-Stokes on a periodic torus."""

__version__ = "0.1.0"
