"""Entailment-based similarity: scorers, penalties, and the steering pool.

The samplers need one number per candidate continuation: how semantically
close it is to the answers already drawn.  That number is an aggregate (max
by default) of bidirectional entailment scores between the candidate's
partial text and every pool member.  Candidates are marked as partial either
by a trailing truncation marker (autoregressive prefixes) or by mask tokens
left inline (denoising states).
"""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import requests

from ._net import post_json
from .domain import MASK_TEXT, TRUNC_TEXT, ProtocolError, Vocab
from .models import PairedWorld, WorldSpec

logger = logging.getLogger(__name__)

AMBIGUOUS_SCORE = 1.0 / 3.0
MAX_NLI_BATCH = 256
PAIR_DELIMITER = "||"


class PartialMarking(str, Enum):
    """How partial texts are flagged before being scored."""

    TRUNC_SUFFIX = "trunc_suffix"
    MASK_INLINE = "mask_inline"
    NONE = "none"


class Aggregation(str, Enum):
    MAX = "max"
    MEAN = "mean"
    MEDIAN = "median"


def apply_marking(text: str, marking: PartialMarking, unfinished: bool = True) -> str:
    """Attach the partial-text marker appropriate for ``marking``.

    TRUNC_SUFFIX appends the truncation marker only when the text is actually
    unfinished; MASK_INLINE leaves the text alone (its mask tokens are already
    inline); NONE is a no-op.
    """
    if marking is PartialMarking.TRUNC_SUFFIX and unfinished and not text.endswith(TRUNC_TEXT):
        return f"{text} {TRUNC_TEXT}".strip()
    return text


class SimilarityScorer:
    """Base scorer contract: directed entailment probability in ``[0, 1]``.

    ``supports_partial`` advertises whether marked partial texts (truncation
    suffix / inline masks) are meaningful inputs; ``understands_prompts``
    whether natural-language question prefixes help (label oracles resolve
    bare answers only).  Backends that can score many pairs at once should
    override :meth:`entail_batch`.
    """

    supports_partial: bool = False
    understands_prompts: bool = True

    def entail(self, premise: str, hypothesis: str) -> float:
        raise NotImplementedError

    def entail_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        return [self.entail(a, b) for a, b in pairs]

    def class_probs(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        """(entail, neutral, contradict); default splits the remainder evenly."""
        p = self.entail(premise, hypothesis)
        return (p, (1.0 - p) / 2.0, (1.0 - p) / 2.0)

    def entails(self, premise: str, hypothesis: str) -> bool:
        """Whether entailment is the argmax class for this directed pair."""
        probs = self.class_probs(premise, hypothesis)
        return int(np.argmax(probs)) == 0


def bidirectional_score(scorer: SimilarityScorer, a: str, b: str) -> float:
    """Symmetrized entailment: mean of the two directed probabilities."""
    if not a.strip() or not b.strip():
        raise ValueError("both texts must be non-empty")
    return 0.5 * (scorer.entail(a, b) + scorer.entail(b, a))


def _aggregate(scores: Sequence[float], aggregation: Aggregation) -> float:
    if aggregation is Aggregation.MAX:
        return max(scores)
    if aggregation is Aggregation.MEAN:
        return sum(scores) / len(scores)
    return float(statistics.median(scores))


def penalty(
    scorer: SimilarityScorer,
    candidate: str,
    pool: Sequence[str],
    aggregation: Aggregation = Aggregation.MAX,
) -> float:
    """Aggregated similarity of a candidate against the pool (0 if empty)."""
    if not pool:
        return 0.0
    return _aggregate([bidirectional_score(scorer, candidate, s) for s in pool], aggregation)


@dataclass
class _CandidateState:
    """Per-candidate incremental aggregation over a grow-only pool."""

    seen: int = 0  # pool additions already folded in
    best: float = 0.0  # running max (MAX mode)
    total: float = 0.0  # running sum over the pool multiset (MEAN mode)


class SteeringPool:
    """Grow-only pool of previous answers with cached candidate penalties.

    Pairwise scores are cached by text pair (markers ride along inside the
    texts, and the marking mode is fixed per pool), so repeated candidates
    across token steps and sequences never re-hit the scorer.  MAX and MEAN
    aggregations fold new pool entries in incrementally; MEDIAN recomputes
    from the cached score histogram.
    """

    def __init__(
        self,
        scorer: SimilarityScorer,
        aggregation: Aggregation = Aggregation.MAX,
        marking: PartialMarking = PartialMarking.TRUNC_SUFFIX,
    ):
        self.scorer = scorer
        self.aggregation = aggregation
        self.marking = marking
        self.texts: list[str] = []
        self._counts: dict[str, int] = {}
        self._distinct: list[str] = []
        self._scores: dict[tuple[str, str], float] = {}
        self._cands: dict[str, _CandidateState] = {}

    def __len__(self) -> int:
        return len(self.texts)

    def add(self, text: str) -> None:
        self.texts.append(text)
        if text not in self._counts:
            self._counts[text] = 0
            self._distinct.append(text)
        self._counts[text] += 1

    def _ensure_scores(self, candidates: Sequence[str], pool_texts: Sequence[str]) -> None:
        missing: list[tuple[str, str]] = []
        for cand in candidates:
            for text in pool_texts:
                if (cand, text) not in self._scores:
                    missing.append((cand, text))
        if not missing:
            return
        # One batched call covers both directions of every missing pair.
        flat: list[tuple[str, str]] = []
        for a, b in missing:
            flat.append((a, b))
            flat.append((b, a))
        directed = self.scorer.entail_batch(flat)
        for i, (a, b) in enumerate(missing):
            self._scores[(a, b)] = 0.5 * (directed[2 * i] + directed[2 * i + 1])

    def penalties(self, candidates: Sequence[str]) -> np.ndarray:
        """Aggregated similarity of each candidate text against the pool."""
        n_pool = len(self.texts)
        if n_pool == 0:
            return np.zeros(len(candidates))
        if self.aggregation is Aggregation.MEDIAN:
            self._ensure_scores(candidates, self._distinct)
            out = []
            for cand in candidates:
                scores = [self._scores[(cand, t)] for t in self.texts]
                out.append(_aggregate(scores, Aggregation.MEDIAN))
            return np.asarray(out)
        out = np.empty(len(candidates))
        for i, cand in enumerate(candidates):
            state = self._cands.setdefault(cand, _CandidateState())
            if state.seen < n_pool:
                fresh = self.texts[state.seen : n_pool]
                self._ensure_scores([cand], sorted(set(fresh)))
                for text in fresh:
                    s = self._scores[(cand, text)]
                    if state.seen == 0 or s > state.best:
                        state.best = s
                    state.total += s
                    state.seen += 1
            if self.aggregation is Aggregation.MAX:
                out[i] = state.best
            else:
                out[i] = state.total / n_pool
        return out


# ---------------------------------------------------------------------------
# World-backed oracle
# ---------------------------------------------------------------------------

_AMBIGUOUS = object()


class OracleScorer(SimilarityScorer):
    """Label-oracle entailment for synthetic worlds.

    Two fully-determined texts score ``1 - noise`` when their world labels
    agree and ``noise`` otherwise.  A partial text (truncation marker or
    inline masks) resolves to the common label of its consistent completions
    when they all agree, and is otherwise ambiguous, scoring exactly 1/3
    against anything.  Texts containing the pair delimiter are resolved
    per side and compared on the (first, second) label pair.
    """

    supports_partial = True
    understands_prompts = False

    def __init__(self, world: WorldSpec, noise: float = 0.0, second_labels: dict | None = None):
        if not 0.0 <= noise < 0.5:
            raise ValueError("noise must be in [0, 0.5)")
        self.world = world
        self.noise = noise
        self.vocab: Vocab = world.vocab
        self._labels = dict(world.labels)
        self._second_labels = dict(second_labels) if second_labels is not None else self._labels
        self._prefix_labels: dict[tuple[int, ...], frozenset[int]] = {}
        self._pattern_cache: dict[tuple[int, ...], object] = {}
        self._resolve_cache: dict[str, object] = {}
        for seq, label in self._labels.items():
            for k in range(len(seq) + 1):
                key = seq[:k]
                cur = self._prefix_labels.get(key, frozenset())
                self._prefix_labels[key] = cur | {label}

    @classmethod
    def for_pairs(cls, pair_world: PairedWorld, noise: float = 0.0) -> "OracleScorer":
        return cls(pair_world.first, noise=noise, second_labels=pair_world.second_labels)

    def _resolve_tokens(self, tokens: tuple[int, ...], labels: dict) -> object:
        mask = self.vocab.mask_id
        if mask in tokens:
            if tokens not in self._pattern_cache:
                found: set[int] = set()
                for seq, label in labels.items():
                    if len(seq) == len(tokens) and all(
                        t == mask or t == s for t, s in zip(tokens, seq)
                    ):
                        found.add(label)
                if not found:
                    raise ValueError(f"unlabelable text: no completion matches {tokens}")
                self._pattern_cache[tokens] = _AMBIGUOUS if len(found) > 1 else next(iter(found))
            return self._pattern_cache[tokens]
        if tokens in labels:
            return labels[tokens]
        raise ValueError(f"unlabelable text: {tokens} is not a reachable sequence")

    def _resolve_side(self, text: str, labels: dict) -> object:
        stripped = text.strip()
        truncated = stripped == TRUNC_TEXT or stripped.endswith(f" {TRUNC_TEXT}")
        if truncated:
            prefix_text = stripped[: -len(TRUNC_TEXT)].strip()
            tokens = self.vocab.encode(prefix_text)
            if MASK_TEXT in prefix_text.split():
                return self._resolve_tokens(tokens, labels)
            found = self._prefix_labels.get(tokens)
            if found is None:
                raise ValueError(f"unlabelable text: {prefix_text!r} is not a reachable prefix")
            return _AMBIGUOUS if len(found) > 1 else next(iter(found))
        return self._resolve_tokens(self.vocab.encode(stripped), labels)

    def resolve(self, text: str) -> object:
        """World label of a text, a label pair for delimited texts, or ambiguous."""
        if text in self._resolve_cache:
            return self._resolve_cache[text]
        delim = f" {PAIR_DELIMITER} "
        if delim in text:
            left, right = text.split(delim, 1)
            a = self._resolve_side(left, self._labels)
            b = self._resolve_side(right, self._second_labels)
            result = _AMBIGUOUS if a is _AMBIGUOUS or b is _AMBIGUOUS else (a, b)
        else:
            result = self._resolve_side(text, self._labels)
        self._resolve_cache[text] = result
        return result

    def entail(self, premise: str, hypothesis: str) -> float:
        a = self.resolve(premise)
        b = self.resolve(hypothesis)
        if a is _AMBIGUOUS or b is _AMBIGUOUS:
            return AMBIGUOUS_SCORE
        return 1.0 - self.noise if a == b else self.noise


def oracle_scorer(world: WorldSpec, noise: float = 0.0) -> OracleScorer:
    return OracleScorer(world, noise=noise)


# ---------------------------------------------------------------------------
# Remote NLI backend
# ---------------------------------------------------------------------------


def remote_entailment(
    endpoint: str,
    premise: str,
    hypothesis: str,
    marking: PartialMarking = PartialMarking.NONE,
    *,
    premise_unfinished: bool = False,
    hypothesis_unfinished: bool = False,
    timeout: float = 30.0,
    retries: int = 3,
    backoff: float = 0.25,
    session: requests.Session | None = None,
    sleeper=None,
) -> np.ndarray:
    """Score one pair remotely; returns ``[entail, neutral, contradict]``.

    Markers are attached per ``marking`` before dispatch (see
    :func:`apply_marking`); the three-class distribution must sum to one
    within 1e-6 or the reply is rejected as a protocol violation.
    """
    pair = (
        apply_marking(premise, marking, premise_unfinished),
        apply_marking(hypothesis, marking, hypothesis_unfinished),
    )
    probs = _post_entailment(
        endpoint, [pair], marking,
        timeout=timeout, retries=retries, backoff=backoff, session=session, sleeper=sleeper,
    )
    return probs[0]


def _post_entailment(
    endpoint: str,
    pairs: Sequence[tuple[str, str]],
    marking: PartialMarking,
    *,
    timeout: float,
    retries: int,
    backoff: float,
    session: requests.Session | None = None,
    sleeper=None,
) -> np.ndarray:
    if len(pairs) > MAX_NLI_BATCH:
        raise ValueError(f"batch of {len(pairs)} exceeds the {MAX_NLI_BATCH}-pair cap")
    payload = {
        "pairs": [{"premise": a, "hypothesis": b} for a, b in pairs],
        "marking": marking.value,
    }
    kwargs: dict = dict(timeout=timeout, retries=retries, backoff=backoff, session=session)
    if sleeper is not None:
        kwargs["sleeper"] = sleeper
    body, _ = post_json(endpoint.rstrip("/") + "/v1/entailment", payload, **kwargs)
    try:
        probs = np.asarray(body["probs"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed entailment response: {exc}") from exc
    if probs.shape != (len(pairs), 3):
        raise ProtocolError(f"expected {len(pairs)}x3 probs, got shape {probs.shape}")
    if np.any(probs < -1e-9) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ProtocolError("entailment rows must be probability distributions")
    return probs


class RemoteEntailmentScorer(SimilarityScorer):
    """Scorer backed by an entailment service; batches are chunked to the cap."""

    supports_partial = True

    def __init__(
        self,
        endpoint: str,
        marking: PartialMarking = PartialMarking.NONE,
        *,
        max_batch: int = MAX_NLI_BATCH,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.25,
    ):
        if not 1 <= max_batch <= MAX_NLI_BATCH:
            raise ValueError(f"max_batch must be in 1..{MAX_NLI_BATCH}")
        self.endpoint = endpoint
        self.marking = marking
        self.max_batch = max_batch
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = requests.Session()

    def _probs(self, pairs: Sequence[tuple[str, str]]) -> np.ndarray:
        chunks = []
        for i in range(0, len(pairs), self.max_batch):
            chunks.append(
                _post_entailment(
                    self.endpoint,
                    pairs[i : i + self.max_batch],
                    self.marking,
                    timeout=self.timeout,
                    retries=self.retries,
                    backoff=self.backoff,
                    session=self._session,
                )
            )
        return np.concatenate(chunks, axis=0)

    def entail(self, premise: str, hypothesis: str) -> float:
        return float(self._probs([(premise, hypothesis)])[0, 0])

    def entail_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        if not pairs:
            return []
        return self._probs(list(pairs))[:, 0].tolist()

    def class_probs(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        row = self._probs([(premise, hypothesis)])[0]
        return (float(row[0]), float(row[1]), float(row[2]))
