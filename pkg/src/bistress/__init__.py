"""Tension, bitension and the bienergy stress-energy tensor for charted maps."""

__version__ = "0.1.0"
