"""Affine code tree fractals: partition sums, pressure zeros and box-counting checks."""

__version__ = "0.1.0"
