"""Confocal NLOS simulation and phasor-field reconstruction with learnable
path compensation and an adaptive illumination window."""

__version__ = "0.1.0"
