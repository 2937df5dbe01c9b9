"""Spatial multi-LRU edge caching: simulation and Che-like analytics."""

__version__ = "0.1.0"
