"""Equality-constrained Newton-KKT solver."""
