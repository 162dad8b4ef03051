"""Split CoT targets into sub-sentences, label them ES/AS, merge into segments.

Sub-sentences are produced by pure punctuation splitting: each one keeps its
trailing delimiter run and any whitespace that follows it, so concatenating
the pieces in order reproduces the original target byte for byte.  Labels come
either from a score threshold (a sub-sentence is abstractive when its score
strictly exceeds ``beta`` times the mean score) or from strict ES/AS
interleaving by position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import jsonl

ES = "ES"
AS = "AS"
LABELS = (ES, AS)

TASK_MWP = "MWP"
TASK_PET = "PET-like"
TASKS = (TASK_MWP, TASK_PET)

STRATEGY_ENT = "ent"
STRATEGY_ENT_STAR = "ent_star"
STRATEGY_INTER = "inter"
STRATEGY_LOSS = "loss"
STRATEGY_BLEU = "bleu"
STRATEGY_ROUGE = "rouge"
STRATEGIES = (
    STRATEGY_ENT,
    STRATEGY_ENT_STAR,
    STRATEGY_INTER,
    STRATEGY_LOSS,
    STRATEGY_BLEU,
    STRATEGY_ROUGE,
)

DEFAULT_DELIMITERS = frozenset(".!?;,。！？；，")


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class CoTSample:
    """One (query, CoT target) pair plus its task profile."""

    id: str
    query: str
    target: str
    task: str

    def __post_init__(self):
        if not self.id:
            raise SegmentationError("sample id must be non-empty")
        if not self.query or not self.target:
            raise SegmentationError(f"sample {self.id}: query and target must be non-empty")
        if self.task not in TASKS:
            raise SegmentationError(f"sample {self.id}: unknown task {self.task!r}")


@dataclass(frozen=True)
class SubSentence:
    index: int
    text: str
    char_span: tuple[int, int]


@dataclass(frozen=True)
class ScoredSubSentence:
    sub: SubSentence
    score: float
    label: str


@dataclass(frozen=True)
class Segment:
    label: str
    text: str
    member_indices: tuple[int, ...]


@dataclass
class SegmentationConfig:
    strategy: str = STRATEGY_ENT
    beta: float = 1.0
    delimiters: frozenset[str] = field(default_factory=lambda: DEFAULT_DELIMITERS)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise SegmentationError(f"unknown strategy {self.strategy!r}")
        if self.beta < 0:
            raise SegmentationError("beta must be >= 0")
        if not self.delimiters:
            raise SegmentationError("delimiter set must be non-empty")


def split_subsentences(
    target: str, delimiters: frozenset[str] | set[str] = DEFAULT_DELIMITERS
) -> list[SubSentence]:
    """Split ``target`` after every delimiter run (plus trailing whitespace).

    Fragments without any real content (consecutive delimiters, stray
    whitespace) never become sub-sentences of their own; they are glued to a
    neighbour so the spans still tile the whole string.
    """
    if not target:
        raise SegmentationError("empty target")

    cuts: list[int] = []
    i = 0
    n = len(target)
    while i < n:
        if target[i] in delimiters:
            while i < n and target[i] in delimiters:
                i += 1
            while i < n and target[i].isspace():
                i += 1
            cuts.append(i)
        else:
            i += 1
    if not cuts or cuts[-1] != n:
        cuts.append(n)

    # spans as [start, end, has_content]
    spans: list[list] = []
    start = 0
    for end in cuts:
        has_content = any(
            ch not in delimiters and not ch.isspace() for ch in target[start:end]
        )
        if spans and (not has_content or not spans[-1][2]):
            spans[-1][1] = end
            spans[-1][2] = spans[-1][2] or has_content
        else:
            spans.append([start, end, has_content])
        start = end

    if not any(s[2] for s in spans):
        raise SegmentationError("no content: target is all delimiters")

    return [
        SubSentence(index=idx, text=target[s:e], char_span=(s, e))
        for idx, (s, e, _) in enumerate(spans)
    ]


def classify_by_threshold(scores: Sequence[float], beta: float) -> list[str]:
    """AS where score > beta * mean(scores); the equality case goes to ES."""
    if not scores:
        raise SegmentationError("scores must be non-empty")
    if beta < 0:
        raise SegmentationError("beta must be >= 0")
    threshold = beta * (sum(scores) / len(scores))
    return [AS if s > threshold else ES for s in scores]


def classify_interleaving(n: int) -> list[str]:
    """Positional labels ES, AS, ES, AS, ... for n sub-sentences."""
    if n < 1:
        raise SegmentationError("need at least one sub-sentence")
    return [ES if i % 2 == 0 else AS for i in range(n)]


def merge_adjacent(labeled: Sequence[ScoredSubSentence]) -> list[Segment]:
    """Collapse runs of equal labels into single segments."""
    if not labeled:
        raise SegmentationError("nothing to merge")
    segments: list[Segment] = []
    run_start = 0
    for i in range(1, len(labeled) + 1):
        if i == len(labeled) or labeled[i].label != labeled[run_start].label:
            members = labeled[run_start:i]
            segments.append(
                Segment(
                    label=members[0].label,
                    text="".join(m.sub.text for m in members),
                    member_indices=tuple(m.sub.index for m in members),
                )
            )
            run_start = i
    return segments


def segment_sample(
    sample: CoTSample,
    config: SegmentationConfig,
    scores: Sequence[float] | None = None,
) -> list[Segment]:
    """Full split -> classify -> merge pipeline for one sample."""
    subs = split_subsentences(sample.target, config.delimiters)
    if config.strategy == STRATEGY_INTER:
        labels = classify_interleaving(len(subs))
        values = [0.0] * len(subs)
    else:
        if scores is None:
            raise SegmentationError(
                f"sample {sample.id}: strategy {config.strategy!r} requires scores"
            )
        if len(scores) != len(subs):
            raise SegmentationError(
                f"sample {sample.id}: {len(scores)} scores for {len(subs)} sub-sentences"
            )
        labels = classify_by_threshold(scores, config.beta)
        values = list(scores)
    labeled = [
        ScoredSubSentence(sub=sub, score=value, label=label)
        for sub, value, label in zip(subs, values, labels)
    ]
    return merge_adjacent(labeled)


# ---------------------------------------------------------------------------
# corpus / segmented-sample files


def read_corpus(path) -> list[CoTSample]:
    """Load a corpus JSONL file (one object per line: id, query, target, task)."""
    _, rows = jsonl.read_jsonl(path)
    samples: list[CoTSample] = []
    seen: set[str] = set()
    for index, row in enumerate(rows, start=1):
        jsonl.require_fields(row, ("id", "query", "target", "task"), path, index)
        try:
            sample = CoTSample(
                id=str(row["id"]),
                query=row["query"],
                target=row["target"],
                task=row["task"],
            )
        except SegmentationError as exc:
            raise jsonl.RecordError(path, index, str(exc)) from exc
        if sample.id in seen:
            raise jsonl.RecordError(path, index, f"duplicate sample id {sample.id!r}")
        seen.add(sample.id)
        samples.append(sample)
    return samples


def write_corpus(path, samples: Iterable[CoTSample], header: dict | None = None) -> None:
    jsonl.write_jsonl(
        path,
        (
            {"id": s.id, "query": s.query, "target": s.target, "task": s.task}
            for s in samples
        ),
        header=header,
    )


def segments_to_row(sample_id: str, segments: Sequence[Segment]) -> dict:
    return {
        "id": sample_id,
        "segments": [
            {
                "label": seg.label,
                "text": seg.text,
                "member_indices": list(seg.member_indices),
            }
            for seg in segments
        ],
    }


def write_segmented(path, rows: Iterable[dict], header: dict | None = None) -> None:
    jsonl.write_jsonl(path, rows, header=header)


def read_segmented(path) -> tuple[dict | None, dict[str, list[Segment]]]:
    """Load segmented samples; returns (header, id -> segments)."""
    header, rows = jsonl.read_jsonl(path)
    out: dict[str, list[Segment]] = {}
    for index, row in enumerate(rows, start=1):
        jsonl.require_fields(row, ("id", "segments"), path, index)
        segs = [
            Segment(
                label=s["label"],
                text=s["text"],
                member_indices=tuple(s["member_indices"]),
            )
            for s in row["segments"]
        ]
        out[str(row["id"])] = segs
    return header, out
