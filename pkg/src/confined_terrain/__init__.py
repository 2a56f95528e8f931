"""Procedural confined-terrain generation and geometric perception toolkit."""

__version__ = "0.1.0"
