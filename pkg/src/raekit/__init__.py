"""Replacement autoencoders for hiding sensitive sections of sensor time series."""

__version__ = "0.1.0"
