"""Singular-drift SDE toolkit."""

__version__ = "0.1.0"
