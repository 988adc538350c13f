"""Simulation and verification toolkit for bounded stabilizing functionals of Poisson processes."""
__version__ = "0.1.0"
