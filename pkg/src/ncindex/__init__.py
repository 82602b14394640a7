"""Numerical toolkit for noncommutative index theory on finite truncations."""

__version__ = "0.1.0"
