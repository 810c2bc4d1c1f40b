"""Sojourn functionals of spatiotemporal Gaussian random fields with long memory."""
__version__ = "0.1.0"
