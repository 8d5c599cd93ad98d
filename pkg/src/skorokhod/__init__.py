"""Azema-Yor and Perkins Skorokhod embeddings: boundaries, extremal bounds, Monte Carlo checks."""

__version__ = "0.1.0"
