"""Simulation of entanglement distribution in modular spin-photon architectures."""
__version__ = "0.1.0"
