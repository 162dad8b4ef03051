"""Tokenisers shared by similarity scoring and the evaluation metrics."""

from __future__ import annotations

import re
from typing import Callable, List

Tokenizer = Callable[[str], List[str]]

_WORD_OR_PUNCT = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize_words(text: str) -> list[str]:
    """English-style tokens: words plus standalone punctuation marks."""
    return _WORD_OR_PUNCT.findall(text)


def tokenize_chars(text: str) -> list[str]:
    """Chinese-style tokens: one token per non-space character."""
    return [ch for ch in text if not ch.isspace()]


def tokenizer_for_task(task: str) -> Tokenizer:
    """Character tokens for PET-like reports, word tokens otherwise."""
    return tokenize_chars if task == "PET-like" else tokenize_words
