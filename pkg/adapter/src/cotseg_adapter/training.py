"""Fine-tuning on TrainingRecord JSONL with a per-epoch metric log.

Each epoch appends one metric-log row {step, train_loss, val_loss, val_bleu}
with strictly increasing steps, consumable by downstream checkpoint
selection.
"""

from __future__ import annotations

import json
import math
import random
from pathlib import Path

import torch
from torch import nn

from .model import ScoringModel, TinySeq2Seq
from .vocab import BOS, EOS, PAD, CharVocab


def read_training_records(path) -> list[dict]:
    """Rows of {input, target}; pipeline header lines are skipped."""
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            obj = json.loads(stripped)
            if obj.get("__header__"):
                continue
            if "input" not in obj or "target" not in obj:
                raise ValueError(f"{path}: line {line_no}: needs input and target")
            rows.append({"input": obj["input"], "target": obj["target"]})
    if not rows:
        raise ValueError(f"{path}: no training records")
    return rows


def char_corpus_bleu(predictions: list[str], references: list[str], max_order: int = 4) -> float:
    """Plain character-level corpus BLEU for the validation log column."""
    matches = [0] * max_order
    totals = [0] * max_order
    cand_len = ref_len = 0
    for pred, ref in zip(predictions, references):
        cand_len += len(pred)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            ref_grams: dict[str, int] = {}
            for i in range(len(ref) - n + 1):
                gram = ref[i : i + n]
                ref_grams[gram] = ref_grams.get(gram, 0) + 1
            seen: dict[str, int] = {}
            for i in range(len(pred) - n + 1):
                gram = pred[i : i + n]
                seen[gram] = seen.get(gram, 0) + 1
            matches[n - 1] += sum(min(c, ref_grams.get(g, 0)) for g, c in seen.items())
            totals[n - 1] += sum(seen.values())
    if any(t == 0 or m == 0 for m, t in zip(matches, totals)):
        return 0.0
    log_sum = sum(math.log(m / t) for m, t in zip(matches, totals))
    bleu = math.exp(log_sum / max_order)
    if cand_len < ref_len and cand_len > 0:
        bleu *= math.exp(1 - ref_len / cand_len)
    return 100.0 * bleu


def _batches(rows, vocab: CharVocab, batch_size: int):
    for start in range(0, len(rows), batch_size):
        chunk = rows[start : start + batch_size]
        src_ids = [[BOS] + vocab.encode(r["input"]) for r in chunk]
        tgt_ids = [vocab.encode(r["target"]) + [EOS] for r in chunk]
        src_len = max(len(s) for s in src_ids)
        tgt_len = max(len(t) for t in tgt_ids)
        src = torch.full((len(chunk), src_len), PAD, dtype=torch.long)
        tgt_in = torch.full((len(chunk), tgt_len), PAD, dtype=torch.long)
        tgt_out = torch.full((len(chunk), tgt_len), PAD, dtype=torch.long)
        for i, (s, t) in enumerate(zip(src_ids, tgt_ids)):
            src[i, : len(s)] = torch.tensor(s)
            tgt_in[i, 0] = BOS
            tgt_in[i, 1 : len(t)] = torch.tensor(t[:-1])
            tgt_out[i, : len(t)] = torch.tensor(t)
        yield src, tgt_in, tgt_out


def _epoch_loss(model: TinySeq2Seq, rows, vocab, batch_size, criterion, optimizer=None):
    total = 0.0
    batches = 0
    for src, tgt_in, tgt_out in _batches(rows, vocab, batch_size):
        logits = model(src, tgt_in)
        loss = criterion(logits.reshape(-1, logits.size(-1)), tgt_out.reshape(-1))
        if optimizer is not None:
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        total += loss.item()
        batches += 1
    return total / max(batches, 1)


def finetune(
    rows: list[dict],
    epochs: int = 2,
    batch_size: int = 64,
    lr: float = 5e-4,
    seed: int = 0,
    emb_dim: int = 32,
    hidden_dim: int = 64,
    max_length: int = 2048,
    val_fraction: float = 0.1,
    base: ScoringModel | None = None,
):
    """Train (from scratch or from ``base``) and return (model, vocab, log rows)."""
    if not rows:
        raise ValueError("no training records")
    torch.manual_seed(seed)
    rng = random.Random(seed)
    order = list(range(len(rows)))
    rng.shuffle(order)
    shuffled = [rows[i] for i in order]
    n_val = max(1, int(len(shuffled) * val_fraction)) if len(shuffled) > 1 else 0
    val_rows = shuffled[:n_val] or shuffled[:1]
    train_rows = shuffled[n_val:] or shuffled

    if base is not None:
        vocab = base.vocab
        model = base.model
        emb_dim = model.embed.embedding_dim
        hidden_dim = model.proj.in_features
    else:
        vocab = CharVocab.from_texts(
            [r["input"] for r in rows] + [r["target"] for r in rows]
        )
        model = TinySeq2Seq(len(vocab), emb_dim=emb_dim, hidden_dim=hidden_dim)

    criterion = nn.CrossEntropyLoss(ignore_index=PAD)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    steps_per_epoch = max(1, math.ceil(len(train_rows) / batch_size))

    log_rows = []
    for epoch in range(1, epochs + 1):
        model.train()
        train_loss = _epoch_loss(model, train_rows, vocab, batch_size, criterion, optimizer)
        model.eval()
        with torch.no_grad():
            val_loss = _epoch_loss(model, val_rows, vocab, batch_size, criterion)
            scoring = ScoringModel(model, vocab, max_length=max_length)
            decoded = [scoring.generate(r["input"], max_new_tokens=64) for r in val_rows]
        val_bleu = char_corpus_bleu(decoded, [r["target"] for r in val_rows])
        log_rows.append(
            {
                "step": epoch * steps_per_epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "val_bleu": val_bleu,
            }
        )
    return ScoringModel(model, vocab, max_length=max_length), vocab, log_rows


def write_metric_log(path, log_rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in log_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
