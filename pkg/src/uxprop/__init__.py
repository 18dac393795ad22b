"""Uncertainty propagation from inputs and model weights into feature attributions."""

__version__ = "0.1.0"
