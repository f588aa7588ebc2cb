"""Snapshot-dated R environments: resolve packages as of a date and emit a container build context."""

__version__ = "0.1.0"

__all__ = ["__version__"]
