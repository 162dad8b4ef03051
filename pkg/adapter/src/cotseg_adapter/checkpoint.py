"""Checkpoint save/load: weights, vocabulary and identity metadata."""

from __future__ import annotations

from pathlib import Path

import torch

from .model import ScoringModel, TinySeq2Seq
from .vocab import CharVocab

FORMAT_VERSION = 1


def save_checkpoint(
    path,
    model: TinySeq2Seq,
    vocab: CharVocab,
    identity: str,
    fine_tuned: bool,
    max_length: int,
    emb_dim: int,
    hidden_dim: int,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": FORMAT_VERSION,
            "state_dict": model.state_dict(),
            "chars": vocab.chars,
            "identity": identity,
            "fine_tuned": fine_tuned,
            "max_length": max_length,
            "emb_dim": emb_dim,
            "hidden_dim": hidden_dim,
        },
        path,
    )


def load_checkpoint(path) -> tuple[ScoringModel, dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format in {path}")
    vocab = CharVocab(payload["chars"])
    model = TinySeq2Seq(
        vocab_size=len(vocab),
        emb_dim=payload["emb_dim"],
        hidden_dim=payload["hidden_dim"],
    )
    model.load_state_dict(payload["state_dict"])
    info = {
        "identity": payload["identity"],
        "fine_tuned": payload["fine_tuned"],
        "max_length": payload["max_length"],
    }
    return ScoringModel(model, vocab, max_length=payload["max_length"]), info
