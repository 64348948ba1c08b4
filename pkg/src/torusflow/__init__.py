"""Flows of periodic vector fields on the torus: rotation vectors, correctors and small divisors."""

__version__ = "0.1.0"
