from __future__ import annotations

import math

import pytest

from cotseg.scoring import (
    LengthExceededError,
    ScoreVector,
    ScorerDescriptor,
    ScoringError,
    TokenScore,
    build_ngram_reference_scorer,
    distribution_entropy,
    read_score_vectors,
    score_subsentences_model,
    score_subsentences_similarity,
    write_score_vectors,
)
from cotseg.segmentation import (
    AS,
    ES,
    CoTSample,
    SubSentence,
    classify_by_threshold,
    split_subsentences,
)

LN2 = math.log(2.0)
LN4 = math.log(4.0)


class FakeScorer:
    """Fixed per-character quantities; spans are one character each."""

    def __init__(self, entropy, loss, vocab_size=4, identity="fake"):
        self.entropy = entropy
        self.loss = loss
        self.vocab_size = vocab_size
        self.descriptor = ScorerDescriptor("ngram_reference", identity, True)

    def score(self, context, continuation):
        out = []
        for i, ch in enumerate(continuation):
            e = self.entropy[i] if isinstance(self.entropy, (list, tuple)) else self.entropy
            l = self.loss[i] if isinstance(self.loss, (list, tuple)) else self.loss
            out.append(TokenScore(token=ch, logprob=-l, entropy=e, loss=l, span=(i, i + 1)))
        return out


class TestDistributionEntropy:
    def test_closed_forms(self):
        assert distribution_entropy([0.5, 0.5]) == pytest.approx(LN2, abs=1e-12)
        assert distribution_entropy([1.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
        assert distribution_entropy([0.25] * 4) == pytest.approx(LN4, abs=1e-12)

    def test_non_normalized_error(self):
        with pytest.raises(ScoringError, match="sum"):
            distribution_entropy([0.5, 0.4])

    def test_negative_entry_error(self):
        with pytest.raises(ScoringError, match="negative"):
            distribution_entropy([1.1, -0.1])


class TestNgramScorer:
    def test_unigram_laplace_hand_count(self):
        # corpus "aab": count(a)=2, N=3, |V|=3 (a, b, unk)  =>  P(a) = 3/6
        scorer = build_ngram_reference_scorer(["aab"], order=1)
        assert scorer.vocab_size == 3
        [token] = scorer.score("", "a")
        assert token.logprob == pytest.approx(math.log(0.5), abs=1e-12)
        assert token.loss == -token.logprob

    def test_unseen_character_scores_as_unknown(self):
        scorer = build_ngram_reference_scorer(["aab"], order=1)
        [token] = scorer.score("", "z")
        assert token.logprob == pytest.approx(math.log(1.0 / 6.0), abs=1e-12)

    def test_bigram_hand_computed_losses_and_entropies(self):
        # trained on "abababab": bigrams ab x4, ba x3; contexts a=4, b=3;
        # unigrams a=4, b=4, N=8; |V|=3
        scorer = build_ngram_reference_scorer(["abababab"], order=2)
        tokens = scorer.score("", "abab")

        p0 = (4 + 1) / (8 + 3)          # first char backs off to the unigram
        p_b_after_a = (4 + 1) / (4 + 3)
        p_a_after_b = (3 + 1) / (3 + 3)
        expected_losses = [
            -math.log(p0),
            -math.log(p_b_after_a),
            -math.log(p_a_after_b),
            -math.log(p_b_after_a),
        ]
        assert [t.loss for t in tokens] == pytest.approx(expected_losses, abs=1e-12)

        def h(probs):
            return -sum(p * math.log(p) for p in probs)

        expected_entropies = [
            h([5 / 11, 5 / 11, 1 / 11]),
            h([5 / 7, 1 / 7, 1 / 7]),
            h([4 / 6, 1 / 6, 1 / 6]),
            h([5 / 7, 1 / 7, 1 / 7]),
        ]
        assert [t.entropy for t in tokens] == pytest.approx(expected_entropies, abs=1e-12)

    def test_context_feeds_history(self):
        scorer = build_ngram_reference_scorer(["abababab"], order=2)
        # with context "a" the first continuation char is conditioned on 'a'
        [token] = scorer.score("a", "b")
        assert token.loss == pytest.approx(-math.log(5 / 7), abs=1e-12)

    def test_spans_tile_the_continuation(self):
        scorer = build_ngram_reference_scorer(["abcabc"], order=3)
        tokens = scorer.score("abc", "cab")
        assert [t.span for t in tokens] == [(0, 1), (1, 2), (2, 3)]

    def test_entropy_within_bounds(self):
        scorer = build_ngram_reference_scorer(["hello world", "hold the door"], order=3)
        cap = math.log(scorer.vocab_size)
        for token in scorer.score("hel", "lo world hold"):
            assert 0.0 <= token.entropy <= cap + 1e-12

    def test_training_text_scores_lower_loss_than_alien_text(self):
        scorer = build_ngram_reference_scorer(["the cat sat on the mat"], order=2)
        def mean_loss(text):
            tokens = scorer.score("", text)
            return sum(t.loss for t in tokens) / len(tokens)
        assert mean_loss("the cat sat") < mean_loss("零一二三四")

    def test_determinism_bit_identical(self):
        corpus = ["abc def", "ghi abc"]
        a = build_ngram_reference_scorer(corpus, order=3)
        b = build_ngram_reference_scorer(corpus, order=3)
        for ta, tb in zip(a.score("ab", "c def gh"), b.score("ab", "c def gh")):
            assert ta == tb
        assert a.descriptor == b.descriptor

    def test_empty_corpus_error(self):
        with pytest.raises(ScoringError, match="empty corpus"):
            build_ngram_reference_scorer([], order=2)

    def test_order_zero_error(self):
        with pytest.raises(ScoringError, match="order"):
            build_ngram_reference_scorer(["ab"], order=0)

    def test_length_limit(self):
        scorer = build_ngram_reference_scorer(["ab"], order=1, max_length=4)
        with pytest.raises(LengthExceededError, match="length exceeded"):
            scorer.score("abc", "ab")

    def test_empty_continuation_error(self):
        scorer = build_ngram_reference_scorer(["ab"], order=1)
        with pytest.raises(ScoringError):
            scorer.score("a", "")


class TestScoreSubsentencesModel:
    def sample(self, target="ab.cd.", query="q"):
        return CoTSample(id="s", query=query, target=target, task="MWP")

    def test_uniform_scorer_gives_constant_scores_then_all_es(self):
        sample = self.sample("One two. Three four.")
        subs = split_subsentences(sample.target, frozenset("."))
        vector = score_subsentences_model(
            sample, subs, FakeScorer(entropy=LN4, loss=LN4), metric="entropy"
        )
        assert list(vector.values) == pytest.approx([LN4, LN4])
        assert classify_by_threshold(vector.values, 1.0) == [ES, ES]

    def test_one_hot_scorer_gives_zero_scores(self):
        sample = self.sample("One two. Three four.")
        subs = split_subsentences(sample.target, frozenset("."))
        vector = score_subsentences_model(
            sample, subs, FakeScorer(entropy=0.0, loss=0.0), metric="entropy"
        )
        assert list(vector.values) == [0.0, 0.0]
        assert classify_by_threshold(vector.values, 1.0) == [ES, ES]

    def test_mean_aggregation_per_subsentence(self):
        sample = self.sample(target="abcd")
        subs = [
            SubSentence(index=0, text="ab", char_span=(0, 2)),
            SubSentence(index=1, text="cd", char_span=(2, 4)),
        ]
        scorer = FakeScorer(entropy=[0.1, 0.3, 0.9, 0.7], loss=0.0)
        vector = score_subsentences_model(sample, subs, scorer, metric="entropy")
        assert list(vector.values) == pytest.approx([0.2, 0.8], abs=1e-12)

    def test_loss_metric(self):
        sample = self.sample(target="abcd")
        subs = [
            SubSentence(index=0, text="ab", char_span=(0, 2)),
            SubSentence(index=1, text="cd", char_span=(2, 4)),
        ]
        scorer = FakeScorer(entropy=0.0, loss=[1.0, 3.0, 5.0, 7.0])
        vector = score_subsentences_model(sample, subs, scorer, metric="loss")
        assert list(vector.values) == pytest.approx([2.0, 6.0], abs=1e-12)

    def test_length_error_carries_sample_id(self):
        sample = self.sample("One two. Three four.")
        subs = split_subsentences(sample.target, frozenset("."))
        scorer = build_ngram_reference_scorer(["ab"], order=1, max_length=2)
        with pytest.raises(LengthExceededError, match="sample s"):
            score_subsentences_model(sample, subs, scorer, metric="entropy")

    def test_teacher_forcing_decomposition(self, mwp_corpus):
        scorer = build_ngram_reference_scorer(
            [s.query for s in mwp_corpus[:20]] + [s.target for s in mwp_corpus[:20]],
            order=3,
        )
        for sample in mwp_corpus[:10]:
            subs = split_subsentences(sample.target)
            whole = scorer.score(sample.query, sample.target)
            pieces = []
            for sub in subs:
                context = sample.query + sample.target[: sub.char_span[0]]
                pieces.extend(scorer.score(context, sub.text))
            assert len(whole) == len(pieces)
            for w, p in zip(whole, pieces):
                assert w.loss == pytest.approx(p.loss, abs=1e-12)
                assert w.entropy == pytest.approx(p.entropy, abs=1e-12)


class TestSimilarityScores:
    def test_query_copy_scores_zero(self):
        # verbatim copy, punctuation included; the delimiter stays with the sub-sentence
        sample = CoTSample(id="s", query="the cat sat.", target="the cat sat. dogs bark loud", task="MWP")
        subs = split_subsentences(sample.target, frozenset("."))
        vector = score_subsentences_similarity(sample, subs, "bleu")
        assert vector.values[0] == pytest.approx(0.0, abs=1e-9)
        assert vector.values[1] == pytest.approx(1.0, abs=1e-9)
        assert classify_by_threshold(vector.values, 1.0) == [ES, AS]

    def test_orientation_invariant(self):
        # a sub-sentence drawn from the query never scores above a disjoint one
        sample = CoTSample(
            id="s", query="alpha beta gamma delta", target="alpha beta. omega psi.", task="MWP"
        )
        subs = split_subsentences(sample.target, frozenset("."))
        for metric in ("bleu", "rouge"):
            vector = score_subsentences_similarity(sample, subs, metric)
            assert vector.values[0] <= vector.values[1]

    def test_rouge_metric(self):
        sample = CoTSample(id="s", query="肝脏异常增大", target="肝脏异常增大。心率正常。", task="PET-like")
        subs = split_subsentences(sample.target, frozenset("。"))
        vector = score_subsentences_similarity(sample, subs, "rouge")
        assert vector.values[0] < vector.values[1]

    def test_unknown_metric_error(self):
        sample = CoTSample(id="s", query="q", target="t", task="MWP")
        subs = split_subsentences(sample.target)
        with pytest.raises(ScoringError):
            score_subsentences_similarity(sample, subs, "meteor")


class TestScoreVectorIO:
    def test_round_trip(self, tmp_path):
        vectors = [
            ScoreVector(sample_id="a", strategy="ent", values=(0.5, 1.5)),
            ScoreVector(sample_id="b", strategy="ent", values=(2.0,)),
        ]
        path = tmp_path / "scores.jsonl"
        write_score_vectors(path, vectors, scorer_identity="ngram:3:xyz",
                            header={"stage": "score"})
        header, loaded = read_score_vectors(path)
        assert header == {"stage": "score"}
        assert loaded["a"] == vectors[0]
        assert loaded["b"] == vectors[1]

    def test_non_finite_score_rejected(self):
        with pytest.raises(ScoringError, match="non-finite"):
            ScoreVector(sample_id="x", strategy="ent", values=(float("nan"),))
