"""Turn segmented samples into iterative-learning training records.

Each segment of a sample becomes one record whose input is the query, a
separator, and every earlier segment in order, and whose target is the
segment itself.  The final record of a sample carries the stop sign: for
math word problems the conclusive phrase already inside the text, for
PET-like reports a special token appended to the last target.  Normal
findings can be mixed into the extractive dataset at a configurable ratio,
and whole corpora split deterministically into train/validation/test.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import jsonl
from .segmentation import (
    AS,
    DEFAULT_DELIMITERS,
    ES,
    TASK_MWP,
    TASK_PET,
    CoTSample,
    Segment,
    split_subsentences,
)

DEFAULT_STOP_PHRASE = "the answer is"
DEFAULT_STOP_TOKEN = "<STOP>"
DEFAULT_SEPARATOR = "|"
DEFAULT_NORMAL_TARGET = "No obvious anomaly"
OTHER_REGION = "other"

SPLIT_NAMES = ("train", "validation", "test")


class DatasetError(ValueError):
    pass


class NoStopSignError(DatasetError):
    """An MWP target without the conclusive phrase cannot be used."""


@dataclass(frozen=True)
class TaskProfile:
    """Stop-sign, separator and normality settings for one task."""

    task: str
    stop_phrase: str | None = None
    stop_token: str | None = None
    separator: str = DEFAULT_SEPARATOR
    gamma: float = 1.0
    normal_target: str = DEFAULT_NORMAL_TARGET
    delimiters: frozenset[str] = field(default_factory=lambda: DEFAULT_DELIMITERS)

    def __post_init__(self):
        if (self.stop_phrase is None) == (self.stop_token is None):
            raise DatasetError("exactly one of stop_phrase/stop_token must be set")
        if self.gamma < 0:
            raise DatasetError("gamma must be >= 0")

    @property
    def stop_sign(self) -> str:
        return self.stop_phrase if self.stop_phrase is not None else self.stop_token  # type: ignore[return-value]

    @classmethod
    def for_task(cls, task: str, **overrides) -> "TaskProfile":
        if task == TASK_MWP:
            defaults = dict(task=task, stop_phrase=DEFAULT_STOP_PHRASE)
        elif task == TASK_PET:
            defaults = dict(task=task, stop_token=DEFAULT_STOP_TOKEN)
        else:
            raise DatasetError(f"unknown task {task!r}")
        defaults.update(overrides)
        return cls(**defaults)


@dataclass(frozen=True)
class TrainingRecord:
    sample_id: str
    input: str
    target: str
    role: str
    is_final: bool


@dataclass(frozen=True)
class DatasetBundle:
    as_records: tuple[TrainingRecord, ...]
    es_records: tuple[TrainingRecord, ...]

    def __post_init__(self):
        for rec in self.as_records:
            if rec.role != AS:
                raise DatasetError(f"record {rec.sample_id} in AS list has role {rec.role}")
        for rec in self.es_records:
            if rec.role != ES:
                raise DatasetError(f"record {rec.sample_id} in ES list has role {rec.role}")


@dataclass(frozen=True)
class RegionSection:
    report_id: str
    region: str
    findings: str
    impression: str


def build_records(
    sample: CoTSample, segments: Sequence[Segment], profile: TaskProfile
) -> list[TrainingRecord]:
    """One record per segment, with the growing query+prefix as input."""
    if not segments:
        raise DatasetError(f"sample {sample.id}: no segments")
    for prev, curr in zip(segments, segments[1:]):
        if prev.label == curr.label:
            raise DatasetError(f"sample {sample.id}: segments not alternating")

    records: list[TrainingRecord] = []
    prefix = sample.query + profile.separator
    for seg in segments:
        records.append(
            TrainingRecord(
                sample_id=sample.id,
                input=prefix,
                target=seg.text,
                role=seg.label,
                is_final=False,
            )
        )
        prefix += seg.text

    if profile.stop_phrase is not None:
        needle = profile.stop_phrase.lower()
        hits = [i for i, rec in enumerate(records) if needle in rec.target.lower()]
        if not hits:
            raise NoStopSignError(f"sample {sample.id}: no stop sign in target")
        final = hits[-1]
    else:
        final = len(records) - 1
        records[final] = replace(
            records[final], target=records[final].target + profile.stop_token
        )
    records[final] = replace(records[final], is_final=True)
    return records


def route_records(records: Iterable[TrainingRecord]) -> DatasetBundle:
    """Split a flat record stream into the AS-dataset and the ES-dataset."""
    as_records = tuple(r for r in records if r.role == AS)
    es_records = tuple(r for r in records if r.role == ES)
    return DatasetBundle(as_records=as_records, es_records=es_records)


def inject_normality(
    bundle: DatasetBundle,
    normals: Sequence[RegionSection],
    gamma: float,
    rng_seed: int,
    profile: TaskProfile,
    total_reports: int | None = None,
) -> DatasetBundle:
    """Append floor(gamma * total reports) normal-finding ES records.

    Sampling is uniform without replacement, falling back to replacement when
    more records are requested than normal sections exist.  ``total_reports``
    defaults to the number of distinct sample ids already in the bundle.
    """
    if gamma < 0:
        raise DatasetError("gamma must be >= 0")
    if total_reports is None:
        total_reports = len(
            {r.sample_id for r in bundle.as_records + bundle.es_records}
        )
    count = math.floor(gamma * total_reports)
    if count == 0:
        return DatasetBundle(bundle.as_records, bundle.es_records)
    if not normals:
        raise DatasetError("gamma > 0 but no normal sections available")

    rng = random.Random(rng_seed)
    if count <= len(normals):
        picks = rng.sample(list(normals), count)
    else:
        picks = [rng.choice(list(normals)) for _ in range(count)]

    stop = profile.stop_token or ""
    injected = tuple(
        TrainingRecord(
            sample_id=f"normal-{i:05d}:{sec.report_id}:{sec.region}",
            input=sec.findings + profile.separator,
            target=profile.normal_target + stop,
            role=ES,
            is_final=True,
        )
        for i, sec in enumerate(picks)
    )
    return DatasetBundle(bundle.as_records, bundle.es_records + injected)


def split_report_by_region(
    report_id: str,
    report: str,
    impression: str,
    keyword_map: Mapping[str, Sequence[str]],
    delimiters: frozenset[str] | set[str] = DEFAULT_DELIMITERS,
    normal_target: str = DEFAULT_NORMAL_TARGET,
) -> list[RegionSection]:
    """Partition a whole-body report into per-region sections.

    Every report sub-sentence lands in the first region whose keyword it
    contains, or in the reserved "other" region.  Regions present in the
    report but absent from the impression get ``normal_target``.
    """
    if not keyword_map:
        raise DatasetError("keyword map must be non-empty")

    def route(text: str) -> str:
        for region, keywords in keyword_map.items():
            if any(kw and kw in text for kw in keywords):
                return region
        return OTHER_REGION

    findings: dict[str, list[str]] = {}
    for sub in split_subsentences(report, delimiters):
        findings.setdefault(route(sub.text), []).append(sub.text)

    impressions: dict[str, list[str]] = {}
    if impression.strip():
        for sub in split_subsentences(impression, delimiters):
            impressions.setdefault(route(sub.text), []).append(sub.text)

    order = list(keyword_map) + [OTHER_REGION]
    sections: list[RegionSection] = []
    for region in order:
        if region not in findings and region not in impressions:
            continue
        sections.append(
            RegionSection(
                report_id=report_id,
                region=region,
                findings="".join(findings.get(region, [])),
                impression="".join(impressions.get(region, [])) or normal_target,
            )
        )
    return sections


def section_is_normal(section: RegionSection, normal_target: str = DEFAULT_NORMAL_TARGET) -> bool:
    return section.impression == normal_target


def sections_to_samples(
    sections: Sequence[RegionSection], normal_target: str = DEFAULT_NORMAL_TARGET
) -> list[CoTSample]:
    """Anomalous sections become standalone PET-like CoT samples."""
    samples = []
    for sec in sections:
        if section_is_normal(sec, normal_target) or not sec.findings:
            continue
        samples.append(
            CoTSample(
                id=f"{sec.report_id}::{sec.region}",
                query=sec.findings,
                target=sec.impression,
                task=TASK_PET,
            )
        )
    return samples


def split_sample_ids(
    ids: Sequence[str], ratios: Sequence[float], rng_seed: int
) -> dict[str, list[str]]:
    """Deterministic train/validation/test partition of sample ids.

    Sizes follow the largest-remainder method so e.g. 10 ids at
    (0.8, 0.1, 0.1) come out as exactly (8, 1, 1).
    """
    if len(ratios) != len(SPLIT_NAMES):
        raise DatasetError(f"expected {len(SPLIT_NAMES)} ratios")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"ratios sum to {sum(ratios)!r}, not 1")
    unique = sorted(set(ids))
    if len(unique) != len(ids):
        raise DatasetError("duplicate sample ids in split input")
    n = len(unique)
    if n < len(ratios):
        raise DatasetError(f"{n} samples cannot fill {len(ratios)} partitions")

    rng = random.Random(rng_seed)
    rng.shuffle(unique)

    exact = [r * n for r in ratios]
    sizes = [math.floor(x) for x in exact]
    remainder = n - sum(sizes)
    by_fraction = sorted(
        range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i)
    )
    for i in by_fraction[:remainder]:
        sizes[i] += 1

    out: dict[str, list[str]] = {}
    start = 0
    for name, size in zip(SPLIT_NAMES, sizes):
        out[name] = unique[start : start + size]
        start += size
    return out


def split_records(
    records: Sequence[TrainingRecord], ratios: Sequence[float], rng_seed: int
) -> dict[str, list[TrainingRecord]]:
    """Split records by sample id so all records of a sample travel together."""
    ids = sorted({r.sample_id for r in records})
    assignment = split_sample_ids(ids, ratios, rng_seed)
    id_to_part = {
        sample_id: name for name, members in assignment.items() for sample_id in members
    }
    out: dict[str, list[TrainingRecord]] = {name: [] for name in SPLIT_NAMES}
    for rec in records:
        out[id_to_part[rec.sample_id]].append(rec)
    return out


# ---------------------------------------------------------------------------
# record / bundle files


def record_to_row(rec: TrainingRecord) -> dict:
    return {
        "sample_id": rec.sample_id,
        "input": rec.input,
        "target": rec.target,
        "role": rec.role,
        "is_final": rec.is_final,
    }


def write_records(path, records: Iterable[TrainingRecord], header: dict | None = None) -> None:
    jsonl.write_jsonl(path, (record_to_row(r) for r in records), header=header)


def read_records(path) -> tuple[dict | None, list[TrainingRecord]]:
    header, rows = jsonl.read_jsonl(path)
    records: list[TrainingRecord] = []
    for index, row in enumerate(rows, start=1):
        jsonl.require_fields(
            row, ("sample_id", "input", "target", "role", "is_final"), path, index
        )
        if row["role"] not in (ES, AS):
            raise jsonl.RecordError(path, index, f"bad role {row['role']!r}")
        records.append(
            TrainingRecord(
                sample_id=str(row["sample_id"]),
                input=row["input"],
                target=row["target"],
                role=row["role"],
                is_final=bool(row["is_final"]),
            )
        )
    return header, records


def write_sections(path, sections: Iterable[RegionSection], header: dict | None = None) -> None:
    jsonl.write_jsonl(
        path,
        (
            {
                "report_id": s.report_id,
                "region": s.region,
                "findings": s.findings,
                "impression": s.impression,
            }
            for s in sections
        ),
        header=header,
    )


def read_sections(path) -> tuple[dict | None, list[RegionSection]]:
    header, rows = jsonl.read_jsonl(path)
    sections: list[RegionSection] = []
    for index, row in enumerate(rows, start=1):
        jsonl.require_fields(row, ("report_id", "region", "findings", "impression"), path, index)
        sections.append(
            RegionSection(
                report_id=str(row["report_id"]),
                region=row["region"],
                findings=row["findings"],
                impression=row["impression"],
            )
        )
    return header, sections


def serialize_bundle(directory, bundle: DatasetBundle, header: dict | None = None) -> None:
    directory = Path(directory)
    write_records(directory / "as.jsonl", bundle.as_records, header=header)
    write_records(directory / "es.jsonl", bundle.es_records, header=header)


def load_bundle(directory) -> DatasetBundle:
    directory = Path(directory)
    _, as_records = read_records(directory / "as.jsonl")
    _, es_records = read_records(directory / "es.jsonl")
    return DatasetBundle(tuple(as_records), tuple(es_records))
