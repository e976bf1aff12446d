"""Pilot-assisted, EM and in-list GLRT ordered-statistics decoding over block fading."""

__version__ = "0.1.0"
