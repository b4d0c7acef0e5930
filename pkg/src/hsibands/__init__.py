"""Hyperspectral band selection from GLCM texture features and mutual information."""

__version__ = "0.1.0"
