"""Desk-scale semi-supervised video object segmentation with template attention."""

__version__ = "0.1.0"
