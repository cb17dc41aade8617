"""Synthetic residential load patterns from an ensemble of recurrent GANs."""

__version__ = "0.1.0"
