"""Multilingual coreference resolution with empty-node recovery."""

__version__ = "0.1.0"
