"""Measurement-assisted preparation of long-range entangled states on Rydberg-style lattices."""

__version__ = "0.1.0"
