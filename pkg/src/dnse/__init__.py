"""Pseudospectral simulation and attractor analysis for the 3D Navier-Stokes
equations with a constant delay in the convecting velocity."""

__version__ = "0.1.0"
