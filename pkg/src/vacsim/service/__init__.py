"""HTTP facade over the pipeline: scenarios, training jobs, what-ifs, feedback."""

from .app import create_app

__all__ = ["create_app"]
