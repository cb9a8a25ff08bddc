"""Simulation and inference toolkit for cavity-carved entanglement of two trapped atoms."""

__version__ = "0.1.0"
