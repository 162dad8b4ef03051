"""Command-line entry point for the whole pipeline.

Stages are separate subcommands (score, segment, build, generate, eval) so
expensive scoring passes can be cached and re-used across beta/gamma sweeps.
Every option can come from a flat key=value config file; command-line flags
override the file.  Artifacts embed a hash of the semantic options so later
stages can refuse accidentally mixed inputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 remote-adapter error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import dataset, evaluation, gateway, jsonl, orchestrator, scoring, segmentation
from .segmentation import (
    DEFAULT_DELIMITERS,
    STRATEGIES,
    STRATEGY_BLEU,
    STRATEGY_ENT_STAR,
    STRATEGY_INTER,
    STRATEGY_LOSS,
    STRATEGY_ROUGE,
    TASK_MWP,
    TASK_PET,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_REMOTE = 3

DEFAULT_KEYWORD_MAP = {
    "liver": ("肝",),
    "gallbladder": ("胆",),
    "pancreas": ("胰",),
    "spleen": ("脾",),
    "lung": ("肺",),
    "lymph": ("淋巴",),
    "bone": ("骨",),
    "kidney": ("肾",),
    "stomach": ("胃",),
    "esophagus": ("食管",),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment."""
    values: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}: line {line_no}: expected key = value")
        key, _, value = stripped.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def load_keyword_map(path) -> dict[str, tuple[str, ...]]:
    raw = load_config_file(path)
    if not raw:
        raise UsageError(f"{path}: keyword map is empty")
    return {
        region: tuple(kw.strip() for kw in keywords.split(",") if kw.strip())
        for region, keywords in raw.items()
    }


class Options:
    """Resolved options: defaults, then config file, then flags."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._file: dict[str, str] = {}
        config_path = self._args.get("config")
        if config_path:
            if not Path(config_path).exists():
                raise UsageError(f"config file not found: {config_path}")
            self._file = load_config_file(config_path)

    def get(self, key: str, default=None, cast=str):
        value = self._args.get(key)
        if value is None and key in self._file:
            value = self._file[key]
        if value is None:
            return default
        if cast is bool and isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        try:
            return cast(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {value!r}") from exc

    def require(self, key: str, cast=str):
        value = self.get(key, None, cast)
        if value is None:
            raise UsageError(f"missing required option: {key.replace('_', '-')}")
        return value


def _normalize_strategy(value: str) -> str:
    value = value.replace("*", "_star")
    if value not in STRATEGIES:
        raise UsageError(f"unknown strategy {value!r} (choose from {', '.join(STRATEGIES)})")
    return value


def config_hash(options: dict) -> str:
    """Hash of the semantic options only; paths never affect it."""
    canonical = json.dumps(options, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _semantic_options(opts: Options) -> dict:
    keys = (
        ("strategy", None, str),
        ("beta", 1.0, float),
        ("gamma", 1.0, float),
        ("seed", None, int),
        ("mode", None, str),
        ("max_iterations", 16, int),
        ("separator", dataset.DEFAULT_SEPARATOR, str),
        ("ngram_order", 3, int),
        ("scorer", "ngram", str),
        ("split", "0.8,0.1,0.1", str),
        ("delimiters", None, str),
        ("stop_phrase", None, str),
        ("stop_token", None, str),
    )
    resolved = {}
    for key, default, cast in keys:
        value = opts.get(key, default, cast)
        if key == "strategy" and value is not None:
            value = _normalize_strategy(value)
        resolved[key] = value
    return resolved


def _delimiters(opts: Options) -> frozenset[str]:
    raw = opts.get("delimiters", None, str)
    return frozenset(raw) if raw else DEFAULT_DELIMITERS


def _corpus_task(samples) -> str:
    tasks = {s.task for s in samples}
    if len(tasks) != 1:
        raise jsonl.RecordError("corpus", 0, f"mixed tasks in one corpus: {sorted(tasks)}")
    return tasks.pop()


def _profile(task: str, opts: Options) -> dataset.TaskProfile:
    overrides = {}
    separator = opts.get("separator", None, str)
    if separator is not None:
        overrides["separator"] = separator
    gamma = opts.get("gamma", None, float)
    if gamma is not None:
        overrides["gamma"] = gamma
    stop_phrase = opts.get("stop_phrase", None, str)
    stop_token = opts.get("stop_token", None, str)
    if stop_phrase and stop_token:
        raise UsageError("pass only one of --stop-phrase/--stop-token")
    if stop_phrase:
        overrides.update(stop_phrase=stop_phrase, stop_token=None)
    elif stop_token:
        overrides.update(stop_phrase=None, stop_token=stop_token)
    overrides["delimiters"] = _delimiters(opts)
    return dataset.TaskProfile.for_task(task, **overrides)


def _endpoint(opts: Options, key: str = "adapter_url") -> gateway.AdapterEndpoint:
    url = opts.require(key)
    return gateway.AdapterEndpoint(
        base_url=url,
        timeout=opts.get("timeout", 30.0, float),
        max_in_flight=opts.get("max_in_flight", 4, int),
    )


# ---------------------------------------------------------------------------
# commands


def cmd_score(opts: Options) -> int:
    samples = segmentation.read_corpus(opts.require("input"))
    strategy = _normalize_strategy(opts.require("strategy"))
    if strategy == STRATEGY_INTER:
        raise UsageError("strategy 'inter' is positional and needs no scores")
    out_path = opts.require("out")
    delimiters = _delimiters(opts)
    hash_value = config_hash(_semantic_options(opts))

    if strategy in (STRATEGY_BLEU, STRATEGY_ROUGE):
        identity = f"similarity:{strategy}"
        vectors = []
        for sample in samples:
            subs = segmentation.split_subsentences(sample.target, delimiters)
            vectors.append(scoring.score_subsentences_similarity(sample, subs, strategy))
    else:
        scorer_kind = opts.get("scorer", "ngram", str)
        if scorer_kind == "remote":
            client = gateway.AdapterClient(_endpoint(opts))
            scorer = gateway.RemoteSequenceScorer(client)
        elif scorer_kind == "ngram":
            order = opts.get("ngram_order", 3, int)
            if strategy == STRATEGY_ENT_STAR:
                texts = [s.query for s in samples]
                fine_tuned = False
            else:
                texts = [s.query for s in samples] + [s.target for s in samples]
                fine_tuned = True
            scorer = scoring.build_ngram_reference_scorer(texts, order, fine_tuned=fine_tuned)
        else:
            raise UsageError(f"unknown scorer {scorer_kind!r} (ngram or remote)")
        identity = scorer.descriptor.identity
        metric = scoring.METRIC_LOSS if strategy == STRATEGY_LOSS else scoring.METRIC_ENTROPY
        vectors = []
        for sample in samples:
            subs = segmentation.split_subsentences(sample.target, delimiters)
            vectors.append(
                scoring.score_subsentences_model(
                    sample, subs, scorer, metric=metric, strategy=strategy
                )
            )

    scoring.write_score_vectors(
        out_path,
        vectors,
        scorer_identity=identity,
        header={
            "stage": "score",
            "config_hash": hash_value,
            "strategy": strategy,
            "scorer_identity": identity,
        },
    )
    print(f"scored {len(vectors)} samples with {strategy} -> {out_path}")
    return EXIT_OK


def cmd_segment(opts: Options) -> int:
    samples = segmentation.read_corpus(opts.require("input"))
    strategy = _normalize_strategy(opts.require("strategy"))
    beta = opts.get("beta", 1.0, float)
    out_path = opts.require("out")
    config = segmentation.SegmentationConfig(
        strategy=strategy, beta=beta, delimiters=_delimiters(opts)
    )
    hash_value = config_hash(_semantic_options(opts))

    scorer_identity = None
    vectors: dict[str, scoring.ScoreVector] = {}
    if strategy != STRATEGY_INTER:
        scores_path = opts.get("scores")
        if not scores_path or not Path(scores_path).exists():
            raise jsonl.RecordError(
                scores_path or "<scores>", 0,
                f"no score cache for strategy {strategy!r}; run the score command first",
            )
        header, vectors = scoring.read_score_vectors(scores_path)
        scorer_identity = (header or {}).get("scorer_identity")
        cached = (header or {}).get("strategy")
        if cached is not None and cached != strategy:
            raise jsonl.RecordError(
                scores_path, 0,
                f"score cache holds strategy {cached!r}, requested {strategy!r}",
            )

    rows = []
    for sample in samples:
        if strategy == STRATEGY_INTER:
            segments = segmentation.segment_sample(sample, config)
        else:
            if sample.id not in vectors:
                raise jsonl.RecordError(
                    opts.get("scores"), 0, f"no cached scores for sample {sample.id!r}"
                )
            segments = segmentation.segment_sample(
                sample, config, scores=vectors[sample.id].values
            )
        rows.append(segmentation.segments_to_row(sample.id, segments))

    header = {
        "stage": "segment",
        "config_hash": hash_value,
        "strategy": strategy,
        "beta": beta,
    }
    if scorer_identity:
        header["scorer_identity"] = scorer_identity
    segmentation.write_segmented(out_path, rows, header=header)
    n_as = sum(1 for row in rows for seg in row["segments"] if seg["label"] == "AS")
    print(f"segmented {len(rows)} samples ({strategy}, beta={beta}); AS segments: {n_as}")
    return EXIT_OK


def cmd_build(opts: Options) -> int:
    samples = segmentation.read_corpus(opts.require("input"))
    seg_header, segmented = segmentation.read_segmented(opts.require("segments"))
    out_dir = Path(opts.require("out_dir"))
    seed = opts.require("seed", int)
    ratios = tuple(float(r) for r in opts.get("split", "0.8,0.1,0.1", str).split(","))
    task = _corpus_task(samples)
    profile = _profile(task, opts)
    hash_value = config_hash(_semantic_options(opts))

    all_records: list[dataset.TrainingRecord] = []
    for sample in samples:
        if sample.id not in segmented:
            raise jsonl.RecordError(
                opts.get("segments"), 0, f"no segments for sample {sample.id!r}"
            )
        all_records.extend(dataset.build_records(sample, segmented[sample.id], profile))
    bundle = dataset.route_records(all_records)

    injected: tuple[dataset.TrainingRecord, ...] = ()
    if task == TASK_PET and profile.gamma > 0:
        normals_path = opts.get("normals")
        if not normals_path:
            raise jsonl.RecordError(
                "<normals>", 0, "gamma > 0 for a PET-like corpus requires --normals"
            )
        _, sections = dataset.read_sections(normals_path)
        normals = [s for s in sections if dataset.section_is_normal(s, profile.normal_target)]
        total_reports = opts.get("total_reports", len(samples), int)
        grown = dataset.inject_normality(
            bundle, normals, profile.gamma, seed, profile, total_reports=total_reports
        )
        injected = grown.es_records[len(bundle.es_records):]
        bundle = grown

    uni_records = all_records + list(injected)
    sample_ids = [s.id for s in samples]
    split = dataset.split_sample_ids(sample_ids, ratios, seed)
    split["train"] = split["train"] + [r.sample_id for r in injected]

    header = {"stage": "build", "config_hash": hash_value}
    dataset.serialize_bundle(out_dir, bundle, header=header)
    dataset.write_records(out_dir / "uni.jsonl", uni_records, header=header)
    meta = {
        "config_hash": hash_value,
        "task": task,
        "strategy": (seg_header or {}).get("strategy"),
        "beta": (seg_header or {}).get("beta"),
        "scorer_identity": (seg_header or {}).get("scorer_identity"),
        "gamma": profile.gamma,
        "seed": seed,
        "separator": profile.separator,
        "stop_phrase": profile.stop_phrase,
        "stop_token": profile.stop_token,
        "normal_target": profile.normal_target,
        "counts": {
            "as": len(bundle.as_records),
            "es": len(bundle.es_records),
            "uni": len(uni_records),
            "injected": len(injected),
        },
        "split": split,
    }
    (out_dir / "bundle.meta.json").write_text(
        json.dumps(meta, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    print(
        f"built {len(all_records)} records (+{len(injected)} injected) -> {out_dir} "
        f"[as={meta['counts']['as']} es={meta['counts']['es']} uni={meta['counts']['uni']}]"
    )
    return EXIT_OK


def _scripted_factory(path, mode):
    _, rows = jsonl.read_jsonl(path)
    scripts = {str(row["sample_id"]): row for row in rows}

    def factory(sample):
        if sample.id not in scripts:
            raise KeyError(f"no script for sample {sample.id!r}")
        row = scripts[sample.id]
        if mode == orchestrator.MODE_DUAL:
            return (
                orchestrator.ScriptedGenerator(row.get("es", []), "scripted-es"),
                orchestrator.ScriptedGenerator(row.get("as", []), "scripted-as"),
            )
        return orchestrator.ScriptedGenerator(row.get("uni", []), "scripted-uni")

    return factory


def cmd_generate(opts: Options) -> int:
    samples = segmentation.read_corpus(opts.require("input"))
    mode = opts.get("mode", orchestrator.MODE_UNI, str)
    if mode not in (orchestrator.MODE_UNI, orchestrator.MODE_DUAL):
        raise UsageError(f"unknown mode {mode!r} (uni or dual)")
    out_path = opts.require("out")
    task = _corpus_task(samples)
    profile = _profile(task, opts)
    max_iterations = opts.get("max_iterations", 16, int)
    hash_value = config_hash(_semantic_options(opts))

    scripts_path = opts.get("scripts")
    if scripts_path:
        factory = _scripted_factory(scripts_path, mode)
    else:
        url = opts.get("adapter_url")
        if not url:
            raise UsageError("generate needs --scripts or --adapter-url")
        client = gateway.AdapterClient(_endpoint(opts))
        if mode == orchestrator.MODE_DUAL:
            as_url = opts.get("adapter_url_as")
            if not as_url:
                raise UsageError("--mode dual requires --adapter-url and --adapter-url-as")
            as_client = gateway.AdapterClient(
                gateway.AdapterEndpoint(base_url=as_url, timeout=opts.get("timeout", 30.0, float))
            )
            esm = gateway.RemoteGenerator(client, seed=opts.get("seed", None, int))
            asm = gateway.RemoteGenerator(as_client, seed=opts.get("seed", None, int))
            factory = lambda sample: (esm, asm)
        else:
            usm = gateway.RemoteGenerator(client, seed=opts.get("seed", None, int))
            factory = lambda sample: usm

    transcripts = orchestrator.batch_generate(
        samples,
        mode,
        factory,
        separator=profile.separator,
        stop_phrase=profile.stop_phrase,
        stop_token=profile.stop_token,
        max_iterations=max_iterations,
        jobs=opts.get("jobs", os.cpu_count() or 1, int),
    )
    orchestrator.write_transcripts(
        out_path,
        transcripts,
        header={"stage": "generate", "config_hash": hash_value, "mode": mode,
                "max_iterations": max_iterations},
    )
    by_term = {term: 0 for term in
               (orchestrator.TERM_STOP, orchestrator.TERM_MAX, orchestrator.TERM_ERROR)}
    for t in transcripts:
        by_term[t.termination] += 1
    print(
        f"generated {len(transcripts)} transcripts ({mode}): "
        f"{by_term[orchestrator.TERM_STOP]} stop_sign, "
        f"{by_term[orchestrator.TERM_MAX]} max_iterations, "
        f"{by_term[orchestrator.TERM_ERROR]} generator_error"
    )
    return EXIT_OK


def cmd_eval(opts: Options) -> int:
    transcript_paths = opts.require("transcripts").split(",")
    gold = segmentation.read_corpus(opts.require("gold"))
    force = bool(opts.get("force", False, bool))
    task = _corpus_task(gold)
    profile = _profile(task, opts)

    hashes = set()
    transcripts: list[orchestrator.GenerationTranscript] = []
    for path in transcript_paths:
        header, rows = orchestrator.read_transcripts(path.strip())
        if header and "config_hash" in header:
            hashes.add(header["config_hash"])
        transcripts.extend(rows)
    if len(hashes) > 1 and not force:
        raise jsonl.RecordError(
            transcript_paths[0], 0,
            f"mixed config hashes {sorted(hashes)}; pass --force to evaluate anyway",
        )

    gold_by_id = {s.id: s for s in gold}
    predictions, references = [], []
    for t in transcripts:
        if t.sample_id not in gold_by_id:
            raise jsonl.RecordError(
                transcript_paths[0], 0, f"transcript {t.sample_id!r} has no gold sample"
            )
        text = t.final_output
        if profile.stop_token:
            text = text.replace(profile.stop_token, "")
        predictions.append(text)
        references.append(gold_by_id[t.sample_id].target)
    if not predictions:
        raise jsonl.RecordError(transcript_paths[0], 0, "no transcripts to evaluate")

    from .tokenization import tokenizer_for_task

    tokenizer = tokenizer_for_task(task)
    bleu = evaluation.corpus_bleu(predictions, references, tokenizer=tokenizer)
    if task == TASK_MWP:
        report = evaluation.EvalReport(
            n_samples=len(predictions),
            corpus_bleu=bleu,
            accuracy=evaluation.accuracy(predictions, references,
                                         stop_phrase=profile.stop_phrase),
        )
    else:
        keyword_path = opts.get("keyword_map")
        keyword_map = load_keyword_map(keyword_path) if keyword_path else DEFAULT_KEYWORD_MAP
        gold_impressions = references
        report = evaluation.EvalReport(
            n_samples=len(predictions),
            corpus_bleu=bleu,
            rouge_l=evaluation.corpus_rouge_l(predictions, references, tokenizer=tokenizer),
            missing_ratio=evaluation.missing_ratio(
                gold_impressions,
                predictions,
                keyword_map,
                normal_target=profile.normal_target,
                delimiters=profile.delimiters,
                stop_token=profile.stop_token,
            ),
        )

    print(report.table())
    out_path = opts.get("out")
    if out_path:
        payload = report.to_dict()
        payload["task"] = task
        payload["config_hash"] = sorted(hashes)[0] if hashes else None
        Path(out_path).write_text(
            json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
    return EXIT_OK


def cmd_regions(opts: Options) -> int:
    reports_path = opts.require("reports")
    out_dir = Path(opts.require("out_dir"))
    keyword_path = opts.get("keyword_map")
    keyword_map = load_keyword_map(keyword_path) if keyword_path else DEFAULT_KEYWORD_MAP
    delimiters = _delimiters(opts)
    hash_value = config_hash(_semantic_options(opts))

    _, rows = jsonl.read_jsonl(reports_path)
    sections: list[dataset.RegionSection] = []
    for index, row in enumerate(rows, start=1):
        jsonl.require_fields(row, ("id", "report", "impression"), reports_path, index)
        sections.extend(
            dataset.split_report_by_region(
                str(row["id"]), row["report"], row["impression"], keyword_map,
                delimiters=delimiters,
            )
        )
    normals = [s for s in sections if dataset.section_is_normal(s)]
    samples = dataset.sections_to_samples(sections)

    out_dir.mkdir(parents=True, exist_ok=True)
    segmentation.write_corpus(out_dir / "sections.jsonl", samples,
                              header={"stage": "regions", "config_hash": hash_value})
    dataset.write_sections(out_dir / "normals.jsonl", normals,
                           header={"stage": "regions", "config_hash": hash_value})
    meta = {
        "config_hash": hash_value,
        "total_reports": len(rows),
        "sections": len(sections),
        "anomalous": len(samples),
        "normals": len(normals),
    }
    (out_dir / "regions.meta.json").write_text(
        json.dumps(meta, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    print(
        f"split {len(rows)} reports into {len(sections)} sections "
        f"({len(samples)} anomalous, {len(normals)} normal) -> {out_dir}"
    )
    return EXIT_OK


def cmd_inspect(opts: Options) -> int:
    samples = segmentation.read_corpus(opts.require("input"))
    delimiters = _delimiters(opts)
    by_task: dict[str, int] = {}
    sub_counts = []
    for s in samples:
        by_task[s.task] = by_task.get(s.task, 0) + 1
        sub_counts.append(len(segmentation.split_subsentences(s.target, delimiters)))
    print(f"samples: {len(samples)}")
    for task, count in sorted(by_task.items()):
        print(f"  task {task}: {count}")
    print(
        f"sub-sentences per target: min {min(sub_counts)}, "
        f"mean {sum(sub_counts) / len(sub_counts):.2f}, max {max(sub_counts)}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="cotseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--strategy")
        p.add_argument("--beta", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--mode")
        p.add_argument("--max-iterations", dest="max_iterations", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--adapter-url", dest="adapter_url")
        p.add_argument("--force", action="store_const", const=True)
        p.add_argument("--separator")
        p.add_argument("--delimiters")
        p.add_argument("--stop-phrase", dest="stop_phrase")
        p.add_argument("--stop-token", dest="stop_token")
        return p

    p = add("score", cmd_score, "score sub-sentences and cache the vectors")
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--scorer", choices=("ngram", "remote"))
    p.add_argument("--ngram-order", dest="ngram_order", type=int)

    p = add("segment", cmd_segment, "label and merge sub-sentences into segments")
    p.add_argument("--input")
    p.add_argument("--scores")
    p.add_argument("--out")

    p = add("build", cmd_build, "build AS/ES/uni training datasets")
    p.add_argument("--input")
    p.add_argument("--segments")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--normals")
    p.add_argument("--total-reports", dest="total_reports", type=int)
    p.add_argument("--split")

    p = add("generate", cmd_generate, "run iterative generation loops")
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--scripts")
    p.add_argument("--adapter-url-as", dest="adapter_url_as")

    p = add("eval", cmd_eval, "compute metrics from transcripts")
    p.add_argument("--transcripts")
    p.add_argument("--gold")
    p.add_argument("--out")
    p.add_argument("--keyword-map", dest="keyword_map")

    p = add("regions", cmd_regions, "split whole reports into per-region sections")
    p.add_argument("--reports")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--keyword-map", dest="keyword_map")

    p = add("inspect", cmd_inspect, "print corpus statistics")
    p.add_argument("--input")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = Options(args)
        return args.func(opts)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except gateway.GatewayError as exc:
        print(f"adapter error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
