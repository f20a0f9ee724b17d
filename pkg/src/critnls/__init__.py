"""Simulation and diagnostics for L^2-critical Schrodinger equations with homogeneous nonlinearities."""

__version__ = "0.1.0"
