"""Offline signature verification from shell contours and metric learning."""

__version__ = "0.1.0"
