"""Numerical laboratory for multiple radial SLE partition functions."""
from .params import KappaParams, derive_params

__all__ = ["KappaParams", "derive_params"]
