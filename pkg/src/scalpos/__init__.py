"""Numerical laboratory for scalar positive immersions and extrinsic surgery."""

__version__ = "0.1.0"
