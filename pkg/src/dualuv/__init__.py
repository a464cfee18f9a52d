"""Dual-UV avatar toolkit: surface-aligned UV feature scattering, UV-space
gaussian avatars with a CPU splatting renderer, avatar regularizers, robust
body fitting and a factorized prompt sampler."""

__version__ = "0.1.0"
