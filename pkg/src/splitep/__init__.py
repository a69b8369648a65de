"""Splitting expectation propagation for Bayesian image reconstruction."""

__version__ = "0.1.0"
