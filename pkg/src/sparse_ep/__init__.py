"""Sparse GP binary classification trained by EP, SEP or ADF."""

__version__ = "0.1.0"
