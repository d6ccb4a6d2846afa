"""Numerical laboratory for the stochastic nonlinear Schrödinger equation."""

__version__ = "0.3.0"

# Bumped whenever the persisted manifest layout changes.
SCHEMA_VERSION = 2
