"""Reference /v1 model adapter around a small seq2seq checkpoint."""

__version__ = "0.1.0"
