"""Uncertainty-aware subspace predictive control of a hybrid wind/solar/battery plant."""

__version__ = "0.1.0"
