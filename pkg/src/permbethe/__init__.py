"""Permanents, double-edge normal factor graphs and their Bethe approximations."""

__version__ = "0.1.0"
