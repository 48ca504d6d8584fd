"""Numerical laboratory for super-Brownian motion in a white-noise environment on the plane."""
__version__ = "0.1.0"
