"""Blind (no-reference) video quality assessment toolkit."""

__version__ = "0.1.0"
