"""Numerical geometry of the space of Kahler potentials on flat complex tori."""
__version__ = "0.1.0"
