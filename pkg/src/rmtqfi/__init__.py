"""Quantum Fisher information of non-integrable systems from exact dynamics and random-matrix theory."""

__version__ = "0.1.0"
