"""Doherty combiner synthesis and pixelated inverse design."""

__version__ = "0.1.0"
