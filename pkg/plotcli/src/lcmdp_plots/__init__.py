"""Benchmark figure generation from experiment metrics files."""

__version__ = "0.1.0"
