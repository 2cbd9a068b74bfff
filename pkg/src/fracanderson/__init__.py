"""Numerics for the discrete fractional Laplacian and the fractional Anderson model."""

__version__ = "0.1.0"
