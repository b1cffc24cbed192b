"""Exact and Monte Carlo tools for speed-change Kawasaki dynamics."""

__version__ = "0.1.0"
