"""Interpretable bag-of-words + image-feature visual question answering."""

__version__ = "0.1.0"
