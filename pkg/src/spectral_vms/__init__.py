"""Spectral variational multiscale stabilization for 2D advection-diffusion."""

__version__ = "0.1.0"
