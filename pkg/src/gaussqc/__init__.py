"""Quantum-correlation quantifiers of two-beam Gaussian fields from photon-counting
statistics."""

__version__ = "0.1.0"
