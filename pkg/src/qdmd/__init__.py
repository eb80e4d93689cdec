"""Desk-scale simulator for quantum dynamic mode decomposition."""

__version__ = "0.1.0"
