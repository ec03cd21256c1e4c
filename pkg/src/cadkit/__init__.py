"""Numerical toolkit for corkscrew domains, dyadic boundary grids, Carleson packing and elliptic measure."""

__version__ = "0.1.0"
