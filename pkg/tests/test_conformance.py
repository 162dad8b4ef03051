from __future__ import annotations

from cotseg.conformance import run_conformance
from cotseg.scoring import build_ngram_reference_scorer
from cotseg.stub_adapter import StubAdapter


def test_stub_adapter_is_conformant():
    scorer = build_ngram_reference_scorer(
        ["abababab", "the cat sat on the mat", "肝脏见异常密度影，考虑恶性。胰腺异常。"],
        order=2,
    )
    with StubAdapter(
        scorer,
        generate_fn=lambda text, n, seed: "generated <STOP>",
        max_length=256,
    ) as stub:
        failures = run_conformance(stub.base_url, max_length=256)
    assert failures == []


def test_conformance_flags_loss_violations():
    scorer = build_ngram_reference_scorer(["abab"], order=1)

    def corrupt(body):
        for token in body["tokens"]:
            token["loss"] = token["loss"] + 1.0
        return body

    with StubAdapter(scorer, generate_fn=lambda t, n, s: "x <STOP>") as stub:
        stub.mutate_score_response = corrupt
        failures = run_conformance(stub.base_url)
    assert any("loss != -logprob" in f for f in failures)


def test_conformance_flags_span_gaps():
    scorer = build_ngram_reference_scorer(["abab"], order=1)

    def corrupt(body):
        if len(body["tokens"]) > 1:
            body["tokens"][-1]["span"][0] += 1
            body["tokens"][-1]["span"][1] += 1
        return body

    with StubAdapter(scorer, generate_fn=lambda t, n, s: "x <STOP>") as stub:
        stub.mutate_score_response = corrupt
        failures = run_conformance(stub.base_url)
    assert any("tile" in f or "cover" in f for f in failures)
