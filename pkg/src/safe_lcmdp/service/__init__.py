"""HTTP service wrapping the simulator: env generation, experiment jobs, summaries."""

from .app import create_app

__all__ = ["create_app"]
