"""Extractive/abstractive CoT segmentation and iterative-generation tooling."""

__version__ = "0.1.0"
