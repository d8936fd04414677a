"""HTTP service exposing runs, presets, artifacts, and CSV comparison."""

from .app import create_app

__all__ = ["create_app"]
