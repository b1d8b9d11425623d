"""Numerical lab for BB84-style key distribution with complementary observables."""

from .linalg import DimensionError

__all__ = ["DimensionError"]
__version__ = "0.1.0"
