"""Constrained Moser-Trudinger heat flow: simulation and blow-up analysis."""

__version__ = "0.1.0"
