"""Spectral extinction conditions and budgeted epidemic control on temporal
and adaptive networks."""

__version__ = "0.1.0"
