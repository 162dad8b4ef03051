"""Adapter command line: init a stock checkpoint, fine-tune, serve.

    cotseg-adapter init --data records.jsonl --out stock.pt
    cotseg-adapter finetune --data records.jsonl --out run/ --epochs 3
    cotseg-adapter serve --checkpoint run/checkpoint.pt --port 8731
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch
import uvicorn

from .checkpoint import load_checkpoint, save_checkpoint
from .model import TinySeq2Seq
from .service import create_app
from .training import finetune, read_training_records, write_metric_log
from .vocab import CharVocab


def cmd_init(args) -> int:
    rows = read_training_records(args.data)
    vocab = CharVocab.from_texts([r["input"] for r in rows] + [r["target"] for r in rows])
    torch.manual_seed(args.seed)
    model = TinySeq2Seq(len(vocab), emb_dim=args.emb_dim, hidden_dim=args.hidden_dim)
    identity = f"tiny-gru:{args.emb_dim}x{args.hidden_dim}:v{len(vocab)}:stock"
    save_checkpoint(
        args.out, model, vocab, identity=identity, fine_tuned=False,
        max_length=args.max_length, emb_dim=args.emb_dim, hidden_dim=args.hidden_dim,
    )
    print(f"wrote stock checkpoint {identity} -> {args.out}")
    return 0


def cmd_finetune(args) -> int:
    rows = read_training_records(args.data)
    base = None
    if args.checkpoint:
        base, _ = load_checkpoint(args.checkpoint)
    model, vocab, log_rows = finetune(
        rows,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        emb_dim=args.emb_dim,
        hidden_dim=args.hidden_dim,
        max_length=args.max_length,
        base=base,
    )
    out_dir = Path(args.out)
    identity = (
        f"tiny-gru:{model.model.embed.embedding_dim}x{model.model.proj.in_features}"
        f":v{len(vocab)}:ft-e{args.epochs}"
    )
    save_checkpoint(
        out_dir / "checkpoint.pt", model.model, vocab, identity=identity,
        fine_tuned=True, max_length=args.max_length,
        emb_dim=model.model.embed.embedding_dim,
        hidden_dim=model.model.proj.in_features,
    )
    write_metric_log(out_dir / "metrics.jsonl", log_rows)
    last = log_rows[-1]
    print(
        f"fine-tuned {identity} on {len(rows)} records; "
        f"final train_loss {last['train_loss']:.4f}, val_loss {last['val_loss']:.4f}, "
        f"val_bleu {last['val_bleu']:.2f} -> {out_dir}"
    )
    return 0


def cmd_serve(args) -> int:
    model, info = load_checkpoint(args.checkpoint)
    app = create_app(model, identity=info["identity"], fine_tuned=info["fine_tuned"])
    print(f"serving {info['identity']} on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotseg-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a random (stock) checkpoint")
    p.add_argument("--data", required=True, help="records JSONL used for the vocabulary")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emb-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--max-length", type=int, default=2048)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("finetune", help="train on TrainingRecord JSONL")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="optional starting checkpoint")
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emb-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--max-length", type=int, default=2048)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("serve", help="serve the /v1 protocol for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8731)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
