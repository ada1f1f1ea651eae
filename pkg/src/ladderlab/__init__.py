"""Desk-scale laboratory for latent boundary-guided adversarial training."""

__version__ = "0.1.0"
