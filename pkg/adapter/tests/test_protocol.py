"""The adapter must pass the same conformance suite as the in-repo stub."""

from __future__ import annotations

import requests

from cotseg.conformance import run_conformance


def test_conformance_suite_passes(served):
    failures = run_conformance(served.base_url, max_length=256)
    assert failures == []


def test_info_reports_identity_and_fine_tuned(served):
    body = requests.get(f"{served.base_url}/v1/info", timeout=5).json()
    assert body["identity"] == "tiny-gru:test"
    assert body["fine_tuned"] is True
    assert body["vocab_size"] >= 2


def test_single_character_continuation_tiles(served):
    body = requests.post(
        f"{served.base_url}/v1/score",
        json={"context": "0 plus 0|", "continuation": "s"},
        timeout=5,
    ).json()
    assert [t["span"] for t in body["tokens"]] == [[0, 1]]
    assert body["tokens"][0]["token"] == "s"


def test_generate_against_gateway_client(served):
    from cotseg.gateway import AdapterClient, AdapterEndpoint, RemoteSequenceScorer

    client = AdapterClient(AdapterEndpoint(base_url=served.base_url, timeout=10))
    scorer = RemoteSequenceScorer(client)
    scores = scorer.score("1 plus 2|", "sum is 3.")
    assert len(scores) == len("sum is 3.")
    assert all(s.loss == -s.logprob for s in scores)


def test_stock_checkpoint_reports_not_fine_tuned(tmp_path):
    import torch

    from conftest import ServerThread, make_toy_records
    from cotseg_adapter.model import ScoringModel, TinySeq2Seq
    from cotseg_adapter.service import create_app
    from cotseg_adapter.vocab import CharVocab

    records = make_toy_records(10)
    vocab = CharVocab.from_texts([r["input"] + r["target"] for r in records])
    torch.manual_seed(1)
    model = ScoringModel(TinySeq2Seq(len(vocab)), vocab, max_length=128)
    app = create_app(model, identity="tiny-gru:stock", fine_tuned=False)
    with ServerThread(app) as server:
        body = requests.get(f"{server.base_url}/v1/info", timeout=5).json()
    assert body["fine_tuned"] is False


def test_over_length_generate_is_a_loud_error(served):
    response = requests.post(
        f"{served.base_url}/v1/generate",
        json={"input": "x" * 300, "max_new_tokens": 4},
        timeout=5,
    )
    assert response.status_code == 413
    assert "length exceeded" in response.json()["error"]
