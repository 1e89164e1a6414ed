"""Matching frontiers and ATT estimation for household panel data."""

__version__ = "0.1.0"
