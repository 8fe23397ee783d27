"""Penalized regression adjustment for completely randomized experiments."""

__version__ = "0.1.0"
