"""Concurrent object regression: time-varying Fréchet regression for metric-space responses."""

__version__ = "0.1.0"
