"""Optimal-control design of gradient-index potentials for beam reshaping."""

__version__ = "0.1.0"
