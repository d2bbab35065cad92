"""Numerical laboratory for scattering maps of the defocusing mass-subcritical NLS."""
__version__ = "0.1.0"
