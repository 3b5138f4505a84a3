"""Uncertainty-aware fairness auditing for small variational classifiers."""

__version__ = "0.1.0"
