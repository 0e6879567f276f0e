"""Sparsity pattern recovery with threshold-stopped orthogonal matching pursuit."""

__version__ = "0.1.0"
