"""Reported metrics and checkpoint selection.

Covers corpus BLEU and ROUGE-L (scaled to [0, 100]), math-word-problem
answer accuracy, the PET missing ratio over keyword-routed anomaly regions,
and selection of a training checkpoint from a metric log.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import jsonl, metrics
from .dataset import DEFAULT_NORMAL_TARGET, DEFAULT_STOP_PHRASE, OTHER_REGION
from .segmentation import DEFAULT_DELIMITERS, SegmentationError, split_subsentences
from .tokenization import Tokenizer, tokenize_words

CRITERION_BEST_TRAIN = "best_train"
CRITERION_BEST_LOSS = "best_loss"
CRITERION_BEST_BLEU = "best_bleu"
CRITERIA = (CRITERION_BEST_TRAIN, CRITERION_BEST_LOSS, CRITERION_BEST_BLEU)

_NUMBER = re.compile(r"[-+]?\$?\d[\d,]*(?:\.\d+)?")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    """Metrics over one sample set; absent metrics stay None, never 0."""

    n_samples: int
    corpus_bleu: float | None = None
    rouge_l: float | None = None
    accuracy: float | None = None
    missing_ratio: float | None = None

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "corpus_bleu": self.corpus_bleu,
            "rouge_l": self.rouge_l,
            "accuracy": self.accuracy,
            "missing_ratio": self.missing_ratio,
        }

    def table(self) -> str:
        lines = [f"{'metric':<14} value", f"{'n_samples':<14} {self.n_samples}"]
        for name in ("corpus_bleu", "rouge_l", "accuracy", "missing_ratio"):
            value = getattr(self, name)
            if value is None:
                continue
            lines.append(f"{name:<14} {value:.4f}")
        return "\n".join(lines)


def extract_answer(text: str, stop_phrase: str = DEFAULT_STOP_PHRASE) -> str | None:
    """Number following the last occurrence of the conclusive phrase.

    Normalisation strips commas, currency signs and a trailing period, so
    "the answer is $1,234." yields "1234".  Returns None when the phrase or
    the number is absent.
    """
    matches = list(re.finditer(re.escape(stop_phrase), text, re.IGNORECASE))
    if not matches:
        return None
    tail = text[matches[-1].end() :]
    found = _NUMBER.search(tail)
    if not found:
        return None
    return found.group(0).replace(",", "").replace("$", "")


def _as_number(value, stop_phrase: str) -> float | None:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    text = str(value)
    extracted = extract_answer(text, stop_phrase)
    if extracted is not None:
        return float(extracted)
    try:
        return float(text.replace(",", "").replace("$", "").strip())
    except ValueError:
        return None


def accuracy(
    predictions: Sequence[str],
    gold: Sequence,
    stop_phrase: str = DEFAULT_STOP_PHRASE,
    tolerance: float = 1e-6,
) -> float:
    """Fraction of predictions whose extracted answer matches gold numerically."""
    if len(predictions) != len(gold):
        raise EvaluationError("predictions and gold differ in length")
    if not predictions:
        raise EvaluationError("empty input")
    correct = 0
    for pred, ref in zip(predictions, gold):
        answer = extract_answer(pred, stop_phrase)
        expected = _as_number(ref, stop_phrase)
        if answer is None or expected is None:
            continue
        if abs(float(answer) - expected) <= tolerance:
            correct += 1
    return correct / len(predictions)


def corpus_bleu(
    predictions: Sequence[str],
    references: Sequence[str],
    tokenizer: Tokenizer = tokenize_words,
) -> float:
    """Corpus-level BLEU-4 with brevity penalty, scaled to [0, 100]."""
    return 100.0 * metrics.corpus_bleu(predictions, references, tokenizer=tokenizer)


def corpus_rouge_l(
    predictions: Sequence[str],
    references: Sequence[str],
    tokenizer: Tokenizer = tokenize_words,
) -> float:
    """Mean sentence-level ROUGE-L F-measure, scaled to [0, 100]."""
    if len(predictions) != len(references):
        raise EvaluationError("predictions and references differ in length")
    if not predictions:
        raise EvaluationError("empty corpus")
    values = [
        metrics.rouge_l(p, r, tokenizer=tokenizer)
        for p, r in zip(predictions, references)
    ]
    return 100.0 * sum(values) / len(values)


def anomaly_regions(
    impression: str,
    keyword_map: Mapping[str, Sequence[str]],
    *,
    normal_target: str = DEFAULT_NORMAL_TARGET,
    delimiters: frozenset[str] | set[str] = DEFAULT_DELIMITERS,
    stop_token: str | None = None,
) -> set[str]:
    """Regions whose impression sentences report an anomaly."""
    text = impression.replace(stop_token, "") if stop_token else impression
    if not text.strip():
        return set()
    try:
        subs = split_subsentences(text, delimiters)
    except SegmentationError:
        return set()
    regions: set[str] = set()
    for sub in subs:
        sentence = sub.text.strip().rstrip("".join(delimiters)).strip()
        if not sentence or sentence == normal_target:
            continue
        for region, keywords in keyword_map.items():
            if any(kw and kw in sub.text for kw in keywords):
                regions.add(region)
                break
        else:
            regions.add(OTHER_REGION)
    return regions


def missing_ratio(
    gold_impressions: Sequence[str],
    generated_impressions: Sequence[str],
    keyword_map: Mapping[str, Sequence[str]],
    *,
    normal_target: str = DEFAULT_NORMAL_TARGET,
    delimiters: frozenset[str] | set[str] = DEFAULT_DELIMITERS,
    stop_token: str | None = None,
) -> float:
    """Mean fraction of gold anomaly regions absent from generated text, x100.

    Samples without any gold anomaly region contribute 0, keeping the
    denominator equal to the full sample count.
    """
    if len(gold_impressions) != len(generated_impressions):
        raise EvaluationError("gold and generated differ in length")
    if not keyword_map:
        raise EvaluationError("keyword map must be non-empty")
    if not gold_impressions:
        raise EvaluationError("empty input")
    total = 0.0
    for gold_text, gen_text in zip(gold_impressions, generated_impressions):
        kwargs = dict(
            normal_target=normal_target, delimiters=delimiters, stop_token=stop_token
        )
        gt = anomaly_regions(gold_text, keyword_map, **kwargs)
        if not gt:
            continue
        gr = anomaly_regions(gen_text, keyword_map, **kwargs)
        total += len(gt - gr) / len(gt)
    return 100.0 * total / len(gold_impressions)


# ---------------------------------------------------------------------------
# checkpoint selection


@dataclass(frozen=True)
class CheckpointEntry:
    step: int
    train_loss: float | None = None
    val_loss: float | None = None
    val_bleu: float | None = None


@dataclass(frozen=True)
class MetricLog:
    entries: tuple[CheckpointEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise EvaluationError("metric log is empty")
        steps = [e.step for e in self.entries]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise EvaluationError("metric log steps must be strictly increasing")


def load_metric_log(path) -> MetricLog:
    _, rows = jsonl.read_jsonl(path)
    entries = []
    for index, row in enumerate(rows, start=1):
        jsonl.require_fields(row, ("step",), path, index)
        entries.append(
            CheckpointEntry(
                step=int(row["step"]),
                train_loss=row.get("train_loss"),
                val_loss=row.get("val_loss"),
                val_bleu=row.get("val_bleu"),
            )
        )
    return MetricLog(entries=tuple(entries))


def select_checkpoint(log: MetricLog, criterion: str) -> int:
    """Step of the best checkpoint; ties resolve to the earliest step."""
    spec = {
        CRITERION_BEST_TRAIN: ("train_loss", False),
        CRITERION_BEST_LOSS: ("val_loss", False),
        CRITERION_BEST_BLEU: ("val_bleu", True),
    }
    if criterion not in spec:
        raise EvaluationError(f"unknown criterion {criterion!r}")
    field_name, maximize = spec[criterion]
    best_step: int | None = None
    best_value: float | None = None
    for entry in log.entries:
        value = getattr(entry, field_name)
        if value is None or not math.isfinite(value):
            raise EvaluationError(
                f"checkpoint step {entry.step} has no usable {field_name}"
            )
        better = best_value is None or (value > best_value if maximize else value < best_value)
        if better:
            best_step, best_value = entry.step, value
    assert best_step is not None
    return best_step
