"""LGL Collocation - integral-form Legendre-Gauss-Lobatto collocation for optimal control."""

__version__ = "1.0.0"
