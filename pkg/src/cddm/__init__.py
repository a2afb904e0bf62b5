"""Chirp delay-Doppler domain modulation simulator."""

__version__ = "0.1.0"
