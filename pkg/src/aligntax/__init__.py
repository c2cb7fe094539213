"""Geometric toolkit for the alignment tax."""

__version__ = "0.1.0"
