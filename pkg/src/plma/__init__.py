"""Partial Legendre transform toolkit for the planar Monge-Ampere equation."""

__version__ = "0.1.0"
