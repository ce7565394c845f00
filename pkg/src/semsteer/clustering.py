"""Greedy semantic clustering against cluster representatives.

Samples are processed in generation order.  A sample joins the first existing
cluster whose representative (its earliest member) it matches under the
configured rule, otherwise it founds a new cluster; cluster ids are assigned
contiguously in founding order.  Two join rules exist:

* BINARY_BIDIRECTIONAL - entailment must be the argmax class in both
  directions (the single-answer convention);
* THRESHOLD - the symmetrized entailment score must reach ``tau`` (the
  answer-pair convention, where each item is
  ``prompt ‖ answer1 ‖ "||" ‖ answer2``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence as Seq

from .domain import SamplePair
from .similarity import PAIR_DELIMITER, SimilarityScorer, bidirectional_score

logger = logging.getLogger(__name__)


class ClusterMode(str, Enum):
    BINARY_BIDIRECTIONAL = "binary_bidirectional"
    THRESHOLD = "threshold"


@dataclass
class ClusterConfig:
    mode: ClusterMode = ClusterMode.BINARY_BIDIRECTIONAL
    tau: float = 0.5
    concat_prompt: bool = True
    delimiter: str = PAIR_DELIMITER

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")


@dataclass
class Clustering:
    """Result of a greedy pass: per-sample cluster ids plus founder indices."""

    assignment: list[int]
    representatives: list[int]

    @property
    def n_clusters(self) -> int:
        return len(self.representatives)

    def sizes(self) -> list[int]:
        counts = [0] * self.n_clusters
        for c in self.assignment:
            counts[c] += 1
        return counts


class GreedyClusterer:
    """Incremental greedy clusterer; feed texts one at a time with :meth:`add`.

    Join decisions are cached per distinct text, so replaying a long run costs
    one scorer comparison per (distinct text, representative) pair.
    """

    def __init__(self, scorer: SimilarityScorer, cfg: ClusterConfig):
        self.scorer = scorer
        self.cfg = cfg
        self.rep_texts: list[str] = []
        self.assignment: list[int] = []
        self.representatives: list[int] = []
        self._known: dict[str, int] = {}

    def _matches(self, text: str, rep: str) -> bool:
        if self.cfg.mode is ClusterMode.BINARY_BIDIRECTIONAL:
            return self.scorer.entails(text, rep) and self.scorer.entails(rep, text)
        return bidirectional_score(self.scorer, rep, text) >= self.cfg.tau

    def add(self, text: str) -> int:
        index = len(self.assignment)
        cid = self._known.get(text)
        if cid is None:
            cid = next(
                (k for k, rep in enumerate(self.rep_texts) if self._matches(text, rep)),
                None,
            )
            if cid is None:
                cid = len(self.rep_texts)
                self.rep_texts.append(text)
                self.representatives.append(index)
            self._known[text] = cid
        self.assignment.append(cid)
        return cid

    def snapshot(self) -> Clustering:
        return Clustering(
            assignment=list(self.assignment), representatives=list(self.representatives)
        )


def prompt_text(prompt: str, answer: str, cfg: ClusterConfig) -> str:
    """Clustering text for a single answer (prompt prepended when configured)."""
    if cfg.concat_prompt and prompt:
        return f"{prompt} {answer}"
    return answer


def pair_text(prompt: str, first: str, second: str, cfg: ClusterConfig) -> str:
    """Clustering text for an answer pair, delimiter between the two answers."""
    body = f"{first} {cfg.delimiter} {second}"
    if cfg.concat_prompt and prompt:
        return f"{prompt} {body}"
    return body


def cluster_se(
    texts: Seq[str],
    scorer: SimilarityScorer,
    cfg: ClusterConfig | None = None,
    prompt: str = "",
) -> Clustering:
    """Greedily cluster single answers under the configured join rule."""
    cfg = cfg if cfg is not None else ClusterConfig()
    clusterer = GreedyClusterer(scorer, cfg)
    for answer in texts:
        clusterer.add(prompt_text(prompt, answer, cfg))
    return clusterer.snapshot()


def cluster_mi(
    pairs: Seq[SamplePair],
    scorer: SimilarityScorer,
    cfg: ClusterConfig | None = None,
    prompt: str = "",
) -> Clustering:
    """Greedily cluster answer pairs; always uses the THRESHOLD join rule."""
    cfg = cfg if cfg is not None else ClusterConfig(mode=ClusterMode.THRESHOLD)
    if cfg.mode is not ClusterMode.THRESHOLD:
        cfg = ClusterConfig(
            mode=ClusterMode.THRESHOLD,
            tau=cfg.tau,
            concat_prompt=cfg.concat_prompt,
            delimiter=cfg.delimiter,
        )
    clusterer = GreedyClusterer(scorer, cfg)
    for pair in pairs:
        clusterer.add(pair_text(prompt, pair.first.text, pair.second.text, cfg))
    return clusterer.snapshot()


def marginal_cluster_index(
    clustering: Clustering,
    pairs: Seq[SamplePair],
    which: str,
    scorer: SimilarityScorer,
    cfg: ClusterConfig | None = None,
    prompt: str = "",
) -> dict[int, int]:
    """Map each joint cluster to the marginal cluster of one of its answer slots.

    The representatives' first (or second) answers are themselves clustered
    with the single-answer rule; joint cluster ``k`` maps to the cluster its
    representative's answer lands in.
    """
    if which not in ("first", "second"):
        raise ValueError("which must be 'first' or 'second'")
    cfg = cfg if cfg is not None else ClusterConfig()
    answers = []
    for idx in clustering.representatives:
        pair = pairs[idx]
        answers.append(pair.first.text if which == "first" else pair.second.text)
    marginal = cluster_se(
        answers,
        scorer,
        ClusterConfig(
            mode=ClusterMode.BINARY_BIDIRECTIONAL,
            tau=cfg.tau,
            concat_prompt=cfg.concat_prompt,
            delimiter=cfg.delimiter,
        ),
        prompt=prompt,
    )
    return {k: marginal.assignment[k] for k in range(clustering.n_clusters)}
