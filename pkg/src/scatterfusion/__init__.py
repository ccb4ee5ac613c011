"""Scattering-transform time-series forecaster with multi-resolution attention."""

__version__ = "0.1.0"
