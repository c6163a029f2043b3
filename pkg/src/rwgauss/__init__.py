"""Relative Wasserstein angles and W2-nearest Gaussians."""

__version__ = "0.1.0"
