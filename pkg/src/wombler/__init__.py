"""Bayesian wombling: gradients, curvature, and boundary line integrals for spatial GPs."""

__version__ = "0.1.0"
