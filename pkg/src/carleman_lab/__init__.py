"""Numerical laboratory for quantitative unique continuation with rough potentials."""

__version__ = "0.1.0"
