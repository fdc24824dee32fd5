"""Hourly hex-cell mobility flows, spatial neighbourhood fusion and forecasting benchmarks."""

__version__ = "0.1.0"
