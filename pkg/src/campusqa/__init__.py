"""Retrieval-augmented question answering over a university knowledge corpus."""

__version__ = "0.1.0"
