"""Dual-encoder bitext retrieval and parallel-text mining toolkit."""

__version__ = "0.1.0"
