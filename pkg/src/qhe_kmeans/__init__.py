"""Quantum k-means over one-time-pad encrypted registers with a trusted key server."""

__version__ = "0.1.0"
