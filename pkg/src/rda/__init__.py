"""Reflective playtest journaling: capture daemon and corpus compiler."""

__version__ = "0.1.0"
