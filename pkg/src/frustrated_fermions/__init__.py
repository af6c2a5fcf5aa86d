"""Quantum trajectories of free fermions under frustrated two-site monitoring."""

__version__ = "0.1.0"
