"""Lie-Trotter and Strang splitting for quantum and classical dynamics, with
phase-space and optimal-transport error measurement."""

__version__ = "0.1.0"
