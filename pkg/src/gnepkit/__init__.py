"""Solver and verifier for generalized Nash equilibria with shared constraints."""

__version__ = "0.1.0"
