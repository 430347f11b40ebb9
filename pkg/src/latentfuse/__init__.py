"""Degradation-aware infrared/visible image fusion in a unified latent space."""

__version__ = "0.1.0"
