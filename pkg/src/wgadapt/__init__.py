"""Adaptive weak Galerkin solver for 2D stationary convection-diffusion."""

__version__ = "0.1.0"
