"""Approximate counting of monotone 2SAT solutions with Rydberg-blockade quench dynamics."""

__version__ = "0.1.0"
