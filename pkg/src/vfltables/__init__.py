"""Secure training of gradient-boosted decision tables over vertically partitioned data."""

__version__ = "0.1.0"
