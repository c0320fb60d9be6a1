"""Polarization-sensitive OCT: second-order Born forward model and k-space inversion."""
__version__ = "0.1.0"
