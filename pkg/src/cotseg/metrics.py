"""BLEU and ROUGE-L overlap metrics.

``sentence_bleu`` backs the similarity-based segment labelling and applies
add-one smoothing to orders above 1 so single sentences without long n-gram
overlap still receive a graded score.  ``corpus_bleu`` is the classic
unsmoothed corpus aggregate used for reporting; ``rouge_l`` is the LCS-based
F-measure with equal precision/recall weighting.  All three return fractions
in [0, 1]; report-level percentage scaling happens in the evaluation module.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from .tokenization import Tokenizer, tokenize_words


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu(
    candidate: str,
    reference: str,
    tokenizer: Tokenizer = tokenize_words,
    max_order: int = 4,
) -> float:
    """Sentence-level BLEU with brevity penalty.

    Precision for order 1 is unsmoothed; orders >= 2 get add-one smoothing
    on both numerator and denominator.  Empty candidates score 0 by
    convention.
    """
    cand = tokenizer(candidate)
    ref = tokenizer(reference)
    if not cand:
        return 0.0
    log_precisions = []
    for n in range(1, max_order + 1):
        cand_counts = ngram_counts(cand, n)
        ref_counts = ngram_counts(ref, n)
        matches = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        total = sum(cand_counts.values())
        if n == 1:
            if matches == 0:
                return 0.0
            precision = matches / total
        else:
            precision = (matches + 1) / (total + 1)
        log_precisions.append(math.log(precision))
    geo_mean = math.exp(sum(log_precisions) / max_order)
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return bp * geo_mean


def corpus_bleu(
    predictions: Sequence[str],
    references: Sequence[str],
    tokenizer: Tokenizer = tokenize_words,
    max_order: int = 4,
) -> float:
    """Corpus-level BLEU: clipped n-gram matches pooled over the corpus.

    Orders for which no candidate n-gram exists anywhere (every prediction
    shorter than n tokens) are excluded from the geometric mean, so a corpus
    compared against itself scores exactly 1 regardless of sentence lengths.
    """
    if len(predictions) != len(references):
        raise ValueError("predictions and references differ in length")
    if not predictions:
        raise ValueError("empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    cand_len = 0
    ref_len = 0
    for pred, ref in zip(predictions, references):
        cand = tokenizer(pred)
        refs = tokenizer(ref)
        cand_len += len(cand)
        ref_len += len(refs)
        for n in range(1, max_order + 1):
            cand_counts = ngram_counts(cand, n)
            ref_counts = ngram_counts(refs, n)
            matches[n - 1] += sum(
                min(count, ref_counts[gram]) for gram, count in cand_counts.items()
            )
            totals[n - 1] += sum(cand_counts.values())
    log_precisions = []
    for m, t in zip(matches, totals):
        if t == 0:
            continue
        if m == 0:
            return 0.0
        log_precisions.append(math.log(m / t))
    if not log_precisions or cand_len == 0:
        return 0.0
    geo_mean = math.exp(sum(log_precisions) / len(log_precisions))
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * geo_mean


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length via the standard DP table."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[len(b)]


def rouge_l(candidate: str, reference: str, tokenizer: Tokenizer = tokenize_words) -> float:
    """ROUGE-L F-measure (equal precision/recall weighting)."""
    cand = tokenizer(candidate)
    ref = tokenizer(reference)
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)
