"""Ordering-based pruning of stability selection ensembles."""

__version__ = "0.1.0"
