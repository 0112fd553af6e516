"""Levy-driven stochastic integro-differential equations: simulation and checks."""

__version__ = "0.1.0"
