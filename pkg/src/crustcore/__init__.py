"""Separation of crustal and core potentials from data on an exterior sphere."""

__version__ = "0.1.0"
