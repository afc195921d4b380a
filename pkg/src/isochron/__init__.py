"""Numerical laboratory for isochronous potential centers and central-force orbits."""

__version__ = "0.1.0"
