"""Iterative item merging and multi-stage hierarchical transfer learning."""

__version__ = "0.1.0"
