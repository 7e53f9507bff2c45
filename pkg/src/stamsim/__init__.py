"""Fock-space simulator for jump-sampled adiabatic control experiments."""

__version__ = "0.1.0"
