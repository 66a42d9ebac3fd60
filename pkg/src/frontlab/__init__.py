"""Numerical laboratory for pulled, pushmi-pullyu and pushed reaction-diffusion fronts."""

__version__ = "0.1.0"
