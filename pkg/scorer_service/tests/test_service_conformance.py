"""Wire-protocol conformance, driven through the client package's remote layer.

Everything here talks to a live uvicorn server the way production does:
``RemoteEntailmentScorer`` / ``remote_entailment`` for three-class scoring,
``remote_logits`` / ``RemoteArmModel`` for next-token queries, and raw HTTP
only where a specific status code is the thing under test.
"""

from __future__ import annotations

import numpy as np
import pytest
import requests

from semsteer import (
    ArmSamplerConfig,
    PartialMarking,
    ProtocolError,
    RemoteArmModel,
    RemoteEntailmentScorer,
    letter_vocab,
    remote_entailment,
    remote_logits,
    sample_set,
)

# Fixture rows are data-driven; keep local aliases for the ones asserted on.
IDENTICAL = ("a b", "a b")
FIXTURE_COLUMN = [
    (("x1", "y1"), (0.5, 0.3, 0.2)),
    (("x2", "y2"), (0.1, 0.6, 0.3)),
    (("x3", "y3"), (0.2, 0.2, 0.6)),
    (("x4", "y4"), (0.25, 0.5, 0.25)),
    (("x5", "y5"), (0.4, 0.4, 0.2)),
]


def post_pairs(base: str, pairs, marking="none", **kwargs) -> requests.Response:
    payload = {
        "pairs": [{"premise": p, "hypothesis": h} for p, h in pairs],
        "marking": marking,
    }
    return requests.post(f"{base}/v1/entailment", json=payload, timeout=10, **kwargs)


class TestHealth:
    def test_reports_ready_model_and_mock_flags(self, plain_server):
        body = requests.get(f"{plain_server}/v1/health", timeout=5).json()
        assert body == {
            "status": "ready",
            "model": "mock",
            "mock": True,
            "fresh_markers": False,
        }


class TestEntailmentScoring:
    def test_fixture_rows_take_priority_over_fallback(self, plain_server):
        scorer = RemoteEntailmentScorer(plain_server)
        assert scorer.class_probs(*IDENTICAL) == pytest.approx((0.9, 0.08, 0.02))

    def test_unseen_pairs_get_deterministic_distributions(self, plain_server):
        scorer = RemoteEntailmentScorer(plain_server)
        first = scorer.class_probs("a novel premise", "a novel hypothesis")
        second = RemoteEntailmentScorer(plain_server).class_probs(
            "a novel premise", "a novel hypothesis"
        )
        assert first == second
        assert min(first) >= 0.0
        assert sum(first) == pytest.approx(1.0, abs=1e-6)

    def test_direction_is_part_of_the_pair(self, plain_server):
        scorer = RemoteEntailmentScorer(plain_server)
        assert scorer.class_probs("x1", "y1") != scorer.class_probs("y1", "x1")


class TestBatching:
    def test_batch_equals_concatenation_of_singles(self, plain_server):
        scorer = RemoteEntailmentScorer(plain_server)
        pairs = [pair for pair, _ in FIXTURE_COLUMN]
        pairs[2:2] = [("free text", "more free text"), IDENTICAL]
        batch = scorer.entail_batch(pairs)
        singles = [scorer.entail(p, h) for p, h in pairs]
        assert batch == pytest.approx(singles)

    def test_chunked_client_preserves_request_order(self, plain_server):
        pairs = [pair for pair, _ in FIXTURE_COLUMN]
        expected = [probs[0] for _, probs in FIXTURE_COLUMN]
        one_request = RemoteEntailmentScorer(plain_server).entail_batch(pairs)
        three_requests = RemoteEntailmentScorer(plain_server, max_batch=2).entail_batch(pairs)
        assert one_request == pytest.approx(expected)
        assert three_requests == pytest.approx(expected)


class TestMarkerPassThrough:
    def test_client_side_truncation_marker_reaches_fixture(self, plain_server):
        row = remote_entailment(
            plain_server,
            "the cat sat",
            "a cat rested here",
            PartialMarking.TRUNC_SUFFIX,
            premise_unfinished=True,
        )
        assert row.tolist() == pytest.approx([0.81, 0.13, 0.06])

    def test_finished_text_is_sent_unmarked(self, plain_server):
        row = remote_entailment(
            plain_server, "the cat sat", "a cat rested here", PartialMarking.TRUNC_SUFFIX
        )
        assert row.tolist() != pytest.approx([0.81, 0.13, 0.06])

    def test_inline_mask_tokens_survive_verbatim(self, plain_server):
        scorer = RemoteEntailmentScorer(plain_server, marking=PartialMarking.MASK_INLINE)
        assert scorer.class_probs("color [MASK] sky", "blue sky") == pytest.approx(
            (0.72, 0.2, 0.08)
        )


class TestErrorCodes:
    def test_oversize_batch_is_413(self, plain_server):
        pairs = [(f"p{i}", f"h{i}") for i in range(17)]  # server cap is 16
        assert post_pairs(plain_server, pairs).status_code == 413
        scorer = RemoteEntailmentScorer(plain_server, max_batch=32)
        with pytest.raises(ProtocolError, match="413"):
            scorer.entail_batch(pairs)

    def test_unknown_marking_is_422(self, plain_server):
        assert post_pairs(plain_server, [("a", "b")], marking="sideways").status_code == 422

    def test_empty_batch_is_422(self, plain_server):
        assert post_pairs(plain_server, []).status_code == 422

    def test_missing_pair_field_is_422(self, plain_server):
        resp = requests.post(
            f"{plain_server}/v1/entailment",
            json={"pairs": [{"premise": "a"}], "marking": "none"},
            timeout=10,
        )
        assert resp.status_code == 422


class TestBearerAuth:
    def test_missing_token_is_401(self, auth_server, monkeypatch):
        monkeypatch.delenv("SEMSTEER_API_TOKEN", raising=False)
        with pytest.raises(ProtocolError, match="401"):
            RemoteEntailmentScorer(auth_server).entail("a", "b")

    def test_wrong_token_is_401(self, auth_server, monkeypatch):
        monkeypatch.setenv("SEMSTEER_API_TOKEN", "not-sesame")
        with pytest.raises(ProtocolError, match="401"):
            RemoteEntailmentScorer(auth_server).entail("a", "b")

    def test_shared_token_grants_access(self, auth_server, monkeypatch):
        monkeypatch.setenv("SEMSTEER_API_TOKEN", "sesame")
        scorer = RemoteEntailmentScorer(auth_server)
        assert scorer.class_probs("x1", "y1") == pytest.approx((0.5, 0.3, 0.2))

    def test_health_stays_open_for_probes(self, auth_server):
        assert requests.get(f"{auth_server}/v1/health", timeout=5).status_code == 200


class TestLogits:
    def test_returns_exactly_top_k_entries(self, plain_server):
        reply = remote_logits(plain_server, "", top_k=3)
        assert len(reply.ids) == len(reply.decoded) == reply.logprobs.size == 3
        assert all(isinstance(t, str) and t for t in reply.decoded)

    def test_full_vocabulary_includes_stop_token(self, plain_server):
        reply = remote_logits(plain_server, "a b", top_k=7)
        assert set(reply.ids) == {0, 1, 2, 3, 4, 5, 7}
        assert "</s>" in reply.decoded
        assert np.logaddexp.reduce(reply.logprobs) == pytest.approx(0.0, abs=1e-9)

    def test_prefix_changes_the_distribution(self, plain_server):
        empty = remote_logits(plain_server, "", top_k=7)
        prefixed = remote_logits(plain_server, "a b", top_k=7)
        assert empty.logprobs.tolist() != prefixed.logprobs.tolist()

    def test_responses_are_deterministic(self, plain_server):
        first = remote_logits(plain_server, "c d", top_k=5)
        second = remote_logits(plain_server, "c d", top_k=5)
        assert first.ids == second.ids
        assert first.logprobs.tolist() == second.logprobs.tolist()

    def test_top_k_beyond_vocabulary_is_rejected(self, plain_server):
        with pytest.raises(ProtocolError, match="422"):
            remote_logits(plain_server, "", top_k=8)


class TestSamplerEndToEnd:
    """The remote model/scorer pair must be usable by the actual sampler."""

    def draw(self, base: str):
        vocab = letter_vocab(6)
        model = RemoteArmModel(base, vocab, top_k=7)
        scorer = RemoteEntailmentScorer(
            base, marking=PartialMarking.TRUNC_SUFFIX, max_batch=16
        )
        cfg = ArmSamplerConfig(lambda0=0.1, eta_tok=0.05, max_tokens=12)
        return sample_set(model, scorer, cfg, 4, np.random.default_rng(7))

    def test_sampling_over_the_wire_is_deterministic(self, plain_server):
        first = self.draw(plain_server)
        second = self.draw(plain_server)
        assert first.texts() == second.texts()
        assert [s.log_ratio for s in first.samples] == [
            s.log_ratio for s in second.samples
        ]

    def test_samples_are_well_formed(self, plain_server):
        sset = self.draw(plain_server)
        assert sset.n == 4
        letters = set("abcdef")
        for sample in sset.samples:
            assert len(sample.sequence.tokens) <= 12
            assert set("".join(sample.text.split())) <= letters
        assert np.isfinite(sset.ess)
        assert 0.0 < sset.ess <= 4.0
