"""Command-line harness."""

from .config import RunConfig
from .cli import main

__all__ = ["RunConfig", "main"]
