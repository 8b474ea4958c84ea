"""Workbench for learning 2D optimal transport maps with small networks."""

__version__ = "0.1.0"
