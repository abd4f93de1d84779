"""Deterministic simulators and numerics for radio-access latency studies."""

__version__ = "0.1.0"
