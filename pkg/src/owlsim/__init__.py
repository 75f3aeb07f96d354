"""Deterministic exploration simulator for a collision-tolerant aerial robot in tunnels."""

__version__ = "0.1.0"
