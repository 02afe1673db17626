"""Segmentation-free recognition of multi-line vertical-script documents."""

__version__ = "0.1.0"
