"""Stationary Lab - numerical laboratory for random walks on T^d x R."""

__version__ = "1.0.0"
