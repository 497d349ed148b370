"""Adaptive-testing simulator for IRT, Bayesian-network and neural-network student models."""

__version__ = "0.1.0"
