"""Numerical and combinatorial laboratory for point-split renormalized products
of random fields."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
