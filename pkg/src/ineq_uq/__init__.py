"""Uncertainty in top income and wealth shares from weighted microdata."""

__version__ = "0.1.0"
