"""Apparent singularities of q-difference operators and their connection data."""

__version__ = "0.1.0"
