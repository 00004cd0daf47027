"""Respiration rate estimation from multi-channel RSS traces of a single radio link."""

__version__ = "0.1.0"
