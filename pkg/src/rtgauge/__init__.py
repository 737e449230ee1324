"""Numerical laboratory for regularizing gauge transformations of SO(r,s) connections."""
__version__ = "0.1.0"
