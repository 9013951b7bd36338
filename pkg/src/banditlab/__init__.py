"""Exact and Monte Carlo tools for query complexity of structured bandit classes."""

__version__ = "0.1.0"
