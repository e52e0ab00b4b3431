"""Emergent Born-rule statistics from stochastic Schrodinger dynamics."""

__version__ = "0.1.0"
