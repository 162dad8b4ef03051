from __future__ import annotations

import json
import math

import pytest

from cotseg.evaluation import load_metric_log, select_checkpoint
from cotseg_adapter.cli import main
from cotseg_adapter.training import (
    char_corpus_bleu,
    finetune,
    read_training_records,
    write_metric_log,
)


class TestFinetune:
    def test_metric_log_steps_strictly_increase(self, trained):
        _, _, log_rows = trained
        steps = [row["step"] for row in log_rows]
        assert len(log_rows) == 4
        assert all(b > a for a, b in zip(steps, steps[1:]))
        for row in log_rows:
            assert math.isfinite(row["train_loss"])
            assert math.isfinite(row["val_loss"])
            assert math.isfinite(row["val_bleu"])

    def test_loss_decreases_on_memorizable_toy_set(self, trained):
        _, _, log_rows = trained
        assert log_rows[-1]["train_loss"] < log_rows[0]["train_loss"]

    def test_log_is_accepted_by_checkpoint_selection(self, trained, tmp_path):
        _, _, log_rows = trained
        path = tmp_path / "metrics.jsonl"
        write_metric_log(path, log_rows)
        log = load_metric_log(path)
        steps = {row["step"] for row in log_rows}
        for criterion in ("best_train", "best_loss", "best_bleu"):
            assert select_checkpoint(log, criterion) in steps

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="no training records"):
            finetune([], epochs=1)

    def test_char_bleu_identity(self):
        assert char_corpus_bleu(["abcdef"], ["abcdef"]) == pytest.approx(100.0)
        assert char_corpus_bleu(["abcd"], ["wxyz"]) == 0.0


class TestCliRoundTrip:
    def test_init_finetune_and_reload(self, toy_records, tmp_path):
        data_path = tmp_path / "records.jsonl"
        with data_path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"__header__": True, "stage": "build"}) + "\n")
            for row in toy_records:
                fh.write(json.dumps(row) + "\n")

        assert read_training_records(data_path) == toy_records

        stock_path = tmp_path / "stock.pt"
        assert main(["init", "--data", str(data_path), "--out", str(stock_path)]) == 0

        run_dir = tmp_path / "run"
        assert main([
            "finetune", "--data", str(data_path), "--out", str(run_dir),
            "--checkpoint", str(stock_path), "--epochs", "2",
            "--batch-size", "16", "--lr", "0.005",
        ]) == 0

        from cotseg_adapter.checkpoint import load_checkpoint

        model, info = load_checkpoint(run_dir / "checkpoint.pt")
        assert info["fine_tuned"] is True
        log = load_metric_log(run_dir / "metrics.jsonl")
        assert select_checkpoint(log, "best_train") in {e.step for e in log.entries}
        assert model.generate("0 plus 0|", max_new_tokens=8) == model.generate(
            "0 plus 0|", max_new_tokens=8
        )

    def test_missing_data_file_is_an_error(self, tmp_path):
        assert main(["init", "--data", str(tmp_path / "nope.jsonl"),
                     "--out", str(tmp_path / "x.pt")]) == 2
