"""Numerical experiments for heat-type equations along Ricci flows."""

__version__ = "0.1.0"
