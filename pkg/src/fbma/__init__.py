"""Numerical laboratory for free-boundary minimal annuli in the unit ball."""

__version__ = "0.1.0"
