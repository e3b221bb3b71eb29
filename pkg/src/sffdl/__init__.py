"""Spectral form factor and energy diffusion in chains of random-matrix sites."""

__version__ = "0.1.0"
