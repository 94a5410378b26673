"""Noise-robust spectral estimation for Hilbertian time series."""

__version__ = "0.1.0"
