"""Discrete-event testbed for demand response over smart-grid communication networks."""

__version__ = "0.1.0"
