"""Simulation and certification of feedback loops around stochastic agent ensembles."""

__version__ = "0.1.0"
