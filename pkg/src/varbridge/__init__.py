"""Gaussian process regression through variational bridges on the SDE form of the prior."""

__version__ = "0.1.0"
