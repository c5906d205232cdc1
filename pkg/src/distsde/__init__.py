"""Numerical laboratory for SDEs with distributional drift."""

__version__ = "0.1.0"
