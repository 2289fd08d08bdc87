"""Hybrid quantum-classical mixture-of-experts laboratory."""

__version__ = "0.1.0"
