"""Rank infected nodes of a network contagion by their likelihood of being the source."""

__version__ = "0.1.0"
