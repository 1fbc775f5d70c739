"""Adjustable one-step diffusion super-resolution with dual low-rank adapters."""

__version__ = "0.1.0"
