"""Numerical laboratory for bubbling solutions of the Brezis-Nirenberg problem in dimensions 4 and 5."""

__version__ = "0.1.0"
