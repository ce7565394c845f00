"""Scoring backends.

Two families: a deterministic mock (fixture lookups plus a hash-derived
fallback, and a toy language model) used by contract tests, and a real
transformer NLI backend.  Both treat marker strings like ``[TRUNC]`` and
``[MASK]`` as ordinary text: the mock matches them verbatim, the real
backend registers them as tokenizer tokens so they survive tokenization.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading

import numpy as np

VALID_MARKINGS = ("none", "trunc_suffix", "mask_inline")
MARKER_TOKENS = ("[TRUNC]", "[MASK]")

# Three-class order used on the wire: [entail, neutral, contradict].
_CLASS_NAMES = ("entailment", "neutral", "contradiction")


def _digest_floats(*parts: str, n: int) -> np.ndarray:
    """``n`` floats in (0, 1), stable across processes and platforms."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    raw = np.frombuffer(digest[: 4 * n], dtype=">u4").astype(np.float64)
    return (raw + 0.5) / 2**32


def fallback_probs(premise: str, hypothesis: str) -> list[float]:
    """Deterministic three-class distribution for pairs outside the fixtures."""
    if premise.split() == hypothesis.split():
        return [0.97, 0.02, 0.01]
    weights = _digest_floats(premise, hypothesis, n=3) + 0.05
    probs = weights / weights.sum()
    return [float(p) for p in probs]


class MockEntailmentBackend:
    """Fixture-backed entailment scores with a deterministic fallback."""

    def __init__(self, fixtures: dict[tuple[str, str], list[float]], model_name: str = "mock"):
        for key, probs in fixtures.items():
            if len(probs) != 3 or abs(sum(probs) - 1.0) > 1e-6 or min(probs) < 0:
                raise ValueError(f"fixture for {key!r} is not a three-class distribution")
        self.fixtures = dict(fixtures)
        self.model_name = model_name
        self.fresh_markers = False

    @classmethod
    def from_file(cls, path: str) -> "MockEntailmentBackend":
        """Load fixtures from a JSON list of {premise, hypothesis, probs} rows."""
        with open(path, "r", encoding="utf-8") as fh:
            rows = json.load(fh)
        fixtures = {
            (row["premise"], row["hypothesis"]): [float(p) for p in row["probs"]]
            for row in rows
        }
        return cls(fixtures)

    def score(self, pairs: list[tuple[str, str]]) -> list[list[float]]:
        return [
            self.fixtures.get((premise, hypothesis)) or fallback_probs(premise, hypothesis)
            for premise, hypothesis in pairs
        ]


class MockLmBackend:
    """A deterministic toy language model over a six-letter vocabulary.

    Token ids follow the client convention for a six-letter vocabulary:
    content ids 0..5 decode to ``a``..``f`` and the end-of-sequence id is 7.
    Conditionals are hash-derived from the prefix text, with end-of-sequence
    mass growing in the prefix length so sampled sequences terminate.
    """

    LETTERS = ("a", "b", "c", "d", "e", "f")
    EOS_ID = 7
    OUTCOMES = (0, 1, 2, 3, 4, 5, EOS_ID)

    model_name = "mock-lm"

    def top_logprobs(self, prefix_text: str, top_k: int) -> tuple[list[int], list[float], list[str]]:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        if top_k > len(self.OUTCOMES):
            raise ValueError(f"top_k exceeds the {len(self.OUTCOMES)}-outcome vocabulary")
        logits = 2.0 * _digest_floats("lm", prefix_text, n=len(self.OUTCOMES))
        logits[-1] += 0.6 * len(prefix_text.split())  # favor stopping as prefixes grow
        logprobs = logits - (np.max(logits) + math.log(np.sum(np.exp(logits - np.max(logits)))))
        order = np.argsort(-logprobs, kind="stable")[:top_k]
        ids = [int(self.OUTCOMES[i]) for i in order]
        decoded = [self.LETTERS[i] if i != self.EOS_ID else "</s>" for i in ids]
        return ids, [float(logprobs[i]) for i in order], decoded


class RealNliBackend:
    """Three-class NLI scoring with a pretrained transformer checkpoint.

    Marker tokens are added to the tokenizer when the checkpoint lacks them
    (``fresh_markers`` reports that, so clients can warn about randomly
    initialized marker embeddings).  Inference is serialized behind a lock;
    the per-request contract is independence, not parallelism.
    """

    def __init__(self, model_name: str, device: str = "cpu"):
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self._torch = torch
        self.model_name = model_name
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_name)
        added = self.tokenizer.add_tokens(list(MARKER_TOKENS))
        if added:
            self.model.resize_token_embeddings(len(self.tokenizer))
        self.fresh_markers = added > 0
        self.model.to(device).eval()
        self.device = device
        self._lock = threading.Lock()
        self._order = self._class_order()

    def _class_order(self) -> list[int]:
        id2label = {
            int(i): str(label).lower()
            for i, label in self.model.config.id2label.items()
        }
        order = []
        for name in _CLASS_NAMES:
            matches = [i for i, label in id2label.items() if name.startswith(label) or label.startswith(name)]
            if len(matches) != 1:
                raise ValueError(f"cannot locate class {name!r} in {id2label}")
            order.append(matches[0])
        return order

    def score(self, pairs: list[tuple[str, str]]) -> list[list[float]]:
        premises = [p for p, _ in pairs]
        hypotheses = [h for _, h in pairs]
        with self._lock, self._torch.no_grad():
            encoded = self.tokenizer(
                premises, hypotheses, padding=True, truncation=True, return_tensors="pt"
            ).to(self.device)
            logits = self.model(**encoded).logits
            probs = self._torch.softmax(logits, dim=-1).cpu().numpy()
        return [[float(row[i]) for i in self._order] for row in probs]
