"""Exact laws, simulation and KPZ scaling checks for ASEP with step Bernoulli initial data."""

__version__ = "0.1.0"
