"""Latent-ODE extrapolation of massive-MIMO channels from partial uplink observations."""

__version__ = "0.1.0"
