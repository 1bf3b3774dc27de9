"""Toolkit for grounded spatial markup, scene graphs, trace lifting, and
benchmark metrics in visual-aid manipulation pipelines."""

__version__ = "0.1.0"
