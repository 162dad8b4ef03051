"""Iterative generation loops over an abstract generator interface.

Dual-path alternates an extractive and an abstractive generator, uni-path
repeats a single generator; every step's output is appended to the running
input and the loop ends as soon as a step contains the stop sign.  Loops are
always bounded by ``max_iterations`` and per-step failures are captured in
the transcript rather than raised, so batch runs never abort on one sample.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

from . import jsonl
from .segmentation import CoTSample

ROLE_ES = "ES"
ROLE_AS = "AS"
ROLE_UNI = "UNI"

TERM_STOP = "stop_sign"
TERM_MAX = "max_iterations"
TERM_ERROR = "generator_error"

MODE_UNI = "uni"
MODE_DUAL = "dual"


class OrchestratorError(ValueError):
    pass


class Generator(Protocol):
    """Request/response text generator; internals stay behind the interface."""

    descriptor: str

    def generate(self, input: str) -> str: ...


@dataclass
class LoopConfig:
    start_input: str
    stop_phrase: str | None = None
    stop_token: str | None = None
    max_iterations: int = 16
    empty_retries: int = 1
    legacy_dual_stop_check: bool = False
    joiner: str = " "  # "" for character-level tasks where segments butt together
    sample_id: str = ""

    def __post_init__(self):
        if (self.stop_phrase is None) == (self.stop_token is None):
            raise OrchestratorError("exactly one of stop_phrase/stop_token must be set")
        if self.max_iterations < 1:
            raise OrchestratorError("max_iterations must be >= 1")

    def contains_stop(self, text: str) -> bool:
        if self.stop_phrase is not None:
            return self.stop_phrase.lower() in text.lower()
        return self.stop_token in text  # type: ignore[operator]


@dataclass(frozen=True)
class GenerationStep:
    role: str
    text: str


@dataclass(frozen=True)
class GenerationTranscript:
    sample_id: str
    steps: tuple[GenerationStep, ...]
    final_output: str
    termination: str
    error: str | None = None
    joiner_steps: tuple[int, ...] = ()


class _StepFailure(Exception):
    pass


class _LoopState:
    def __init__(self, cfg: LoopConfig):
        self.cfg = cfg
        self.input = cfg.start_input
        self.steps: list[GenerationStep] = []
        self.generated = ""
        self.joiners: list[int] = []

    def call(self, generator: Generator, role: str) -> str:
        """Run one generator call, record the step, return the raw output."""
        raw = ""
        for attempt in range(self.cfg.empty_retries + 1):
            raw = generator.generate(self.input)
            if not isinstance(raw, str):
                raise _StepFailure(f"{role} generator returned non-text output")
            if raw:
                break
        if not raw:
            raise _StepFailure("empty generation")
        # insert the joiner only when neither side provides whitespace
        text = raw
        if (
            self.cfg.joiner
            and self.generated
            and not self.generated[-1].isspace()
            and not raw[:1].isspace()
        ):
            text = self.cfg.joiner + raw
            self.joiners.append(len(self.steps))
        self.steps.append(GenerationStep(role=role, text=text))
        self.generated += text
        self.input += text
        return raw

    def transcript(self, termination: str, error: str | None = None) -> GenerationTranscript:
        return GenerationTranscript(
            sample_id=self.cfg.sample_id,
            steps=tuple(self.steps),
            final_output=self.generated,
            termination=termination,
            error=error,
            joiner_steps=tuple(self.joiners),
        )


def run_dual_path(esm: Generator, asm: Generator, cfg: LoopConfig) -> GenerationTranscript:
    """Alternate ES and AS generators until a step carries the stop sign.

    As printed, the source procedure re-checks the extractive output after
    the abstractive call; that check is dead code, so by default the most
    recent (abstractive) output is checked instead.  Set
    ``legacy_dual_stop_check`` to reproduce the literal behaviour.
    """
    state = _LoopState(cfg)
    try:
        for _ in range(cfg.max_iterations):
            es_raw = state.call(esm, ROLE_ES)
            if cfg.contains_stop(es_raw):
                return state.transcript(TERM_STOP)
            as_raw = state.call(asm, ROLE_AS)
            checked = es_raw if cfg.legacy_dual_stop_check else as_raw
            if cfg.contains_stop(checked):
                return state.transcript(TERM_STOP)
    except _StepFailure as exc:
        return state.transcript(TERM_ERROR, error=str(exc))
    except Exception as exc:  # generator-side failure
        return state.transcript(TERM_ERROR, error=f"{type(exc).__name__}: {exc}")
    return state.transcript(TERM_MAX)


def run_uni_path(usm: Generator, cfg: LoopConfig) -> GenerationTranscript:
    """Repeat a single generator until a step carries the stop sign."""
    state = _LoopState(cfg)
    try:
        for _ in range(cfg.max_iterations):
            raw = state.call(usm, ROLE_UNI)
            if cfg.contains_stop(raw):
                return state.transcript(TERM_STOP)
    except _StepFailure as exc:
        return state.transcript(TERM_ERROR, error=str(exc))
    except Exception as exc:
        return state.transcript(TERM_ERROR, error=f"{type(exc).__name__}: {exc}")
    return state.transcript(TERM_MAX)


class ScriptedGenerator:
    """Replays a fixed output sequence; raises once the script runs out."""

    def __init__(self, outputs: Sequence[str], descriptor: str = "scripted"):
        self._outputs = list(outputs)
        self._cursor = 0
        self.descriptor = descriptor

    def generate(self, input: str) -> str:
        if self._cursor >= len(self._outputs):
            raise RuntimeError("script exhausted")
        out = self._outputs[self._cursor]
        self._cursor += 1
        return out


class RecordingGenerator:
    """Wraps a generator and records every input it was called with."""

    def __init__(self, inner: Generator):
        self._inner = inner
        self.descriptor = getattr(inner, "descriptor", "recording")
        self.inputs: list[str] = []

    def generate(self, input: str) -> str:
        self.inputs.append(input)
        return self._inner.generate(input)


def batch_generate(
    samples: Sequence[CoTSample],
    mode: str,
    gen_factory: Callable,
    *,
    separator: str = "|",
    stop_phrase: str | None = None,
    stop_token: str | None = None,
    max_iterations: int = 16,
    legacy_dual_stop_check: bool = False,
    joiner: str | None = None,
    jobs: int = 1,
) -> list[GenerationTranscript]:
    """One transcript per sample, in input order.

    ``gen_factory(sample)`` returns a Generator for uni mode or an
    (esm, asm) pair for dual mode.  Factory and generator failures become
    generator_error transcripts; the batch itself never raises per-sample.
    ``joiner`` defaults to a space for phrase-stopped (word-level) tasks and
    to nothing for token-stopped (character-level) ones.
    """
    if mode not in (MODE_UNI, MODE_DUAL):
        raise OrchestratorError(f"unknown mode {mode!r}")
    if joiner is None:
        joiner = "" if stop_token is not None else " "

    def run_one(sample: CoTSample) -> GenerationTranscript:
        cfg = LoopConfig(
            start_input=sample.query + separator,
            stop_phrase=stop_phrase,
            stop_token=stop_token,
            max_iterations=max_iterations,
            legacy_dual_stop_check=legacy_dual_stop_check,
            joiner=joiner,
            sample_id=sample.id,
        )
        try:
            if mode == MODE_DUAL:
                esm, asm = gen_factory(sample)
                return run_dual_path(esm, asm, cfg)
            return run_uni_path(gen_factory(sample), cfg)
        except Exception as exc:
            return GenerationTranscript(
                sample_id=sample.id,
                steps=(),
                final_output="",
                termination=TERM_ERROR,
                error=f"{type(exc).__name__}: {exc}",
            )

    if not samples:
        return []
    if jobs <= 1:
        return [run_one(s) for s in samples]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_one, samples))


# ---------------------------------------------------------------------------
# transcript files


def transcript_to_row(t: GenerationTranscript) -> dict:
    row = {
        "sample_id": t.sample_id,
        "steps": [{"role": s.role, "text": s.text} for s in t.steps],
        "final_output": t.final_output,
        "termination": t.termination,
    }
    if t.error is not None:
        row["error"] = t.error
    if t.joiner_steps:
        row["joiner_steps"] = list(t.joiner_steps)
    return row


def write_transcripts(
    path, transcripts: Iterable[GenerationTranscript], header: dict | None = None
) -> None:
    jsonl.write_jsonl(path, (transcript_to_row(t) for t in transcripts), header=header)


def read_transcripts(path) -> tuple[dict | None, list[GenerationTranscript]]:
    header, rows = jsonl.read_jsonl(path)
    out: list[GenerationTranscript] = []
    for index, row in enumerate(rows, start=1):
        jsonl.require_fields(
            row, ("sample_id", "steps", "final_output", "termination"), path, index
        )
        out.append(
            GenerationTranscript(
                sample_id=str(row["sample_id"]),
                steps=tuple(
                    GenerationStep(role=s["role"], text=s["text"]) for s in row["steps"]
                ),
                final_output=row["final_output"],
                termination=row["termination"],
                error=row.get("error"),
                joiner_steps=tuple(row.get("joiner_steps", ())),
            )
        )
    return header, out
