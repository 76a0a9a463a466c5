"""Rare-event tail probabilities for extreme beta-Laguerre eigenvalues."""

__version__ = "0.1.0"
