"""Gradient descent on deep matrix factorization: low-rank windows and their stability."""

__version__ = "0.1.0"
