"""Diversity-steered autoregressive sampling.

At every token step the model's next-token distribution is tilted away from
continuations that entail answers already in the pool: candidate ``c`` gets
``log q(c) = log p(c) - lam * penalty(c)`` (renormalized over the support),
where the penalty is the aggregated bidirectional-entailment similarity of
``decode(prefix + c) + " [TRUNC]"`` against the pool.  The base log-probability
is always recorded over the model's full support so that
``w = exp(logp - logq)`` debiases downstream estimates.

The tilt strength ``lam`` adapts within a sequence: after each committed
token it moves by ``eta_tok * (penalty - e_target)`` and is clamped at zero.
It resets to ``lambda0`` for each new sequence; raising ``lambda0`` across
sequences is the estimator layer's job.

Randomness protocol: exactly one uniform draw per committed token, inverted
through the cumulative proposal probabilities in ascending-token-id order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence as Seq

import numpy as np

from .domain import TRUNC_TEXT, Origin, SamplePair, SampleSet, Sequence, SequenceSample, TokenStep
from .models import ArmModel, PairedWorld
from .similarity import Aggregation, PartialMarking, SimilarityScorer, SteeringPool

logger = logging.getLogger(__name__)

FULL_SUPPORT = None


@dataclass
class ArmSamplerConfig:
    """Knobs for one autoregressive steering run.

    ``top_k=None`` means the proposal support is the model's full (finite)
    support; with a finite ``top_k`` the proposal renormalizes over the top-k
    base logits and the importance weights only correct within that support.
    """

    lambda0: float = 0.0
    eta_tok: float = 0.1
    e_target: float = 0.3
    top_k: int | None = FULL_SUPPORT
    max_tokens: int = 64
    aggregation: Aggregation = Aggregation.MAX

    def __post_init__(self) -> None:
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be >= 0")
        if self.eta_tok < 0:
            raise ValueError("eta_tok must be >= 0")
        if not 0.0 <= self.e_target <= 1.0:
            raise ValueError("e_target must be in [0, 1]")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1 or None for full support")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    @property
    def steering_enabled(self) -> bool:
        return self.lambda0 > 0 or self.eta_tok > 0


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits)
    shifted = logits - m
    return shifted - np.log(np.sum(np.exp(shifted)))


def tilt_logits(base_logits: np.ndarray, penalties: np.ndarray, lam: float) -> np.ndarray:
    """Normalized log-probabilities of ``softmax(base - lam * penalties)``."""
    base = np.asarray(base_logits, dtype=np.float64)
    pens = np.asarray(penalties, dtype=np.float64)
    if base.shape != pens.shape:
        raise ValueError(f"logits shape {base.shape} != penalties shape {pens.shape}")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if np.any(pens < -1e-12) or np.any(pens > 1.0 + 1e-12):
        raise ValueError("penalties must lie in [0, 1]")
    if lam == 0.0:
        return log_softmax(base)
    return log_softmax(base - lam * pens)


def update_lambda_token(lam: float, max_similarity: float, eta_tok: float, e_target: float) -> float:
    """Token-level tilt adaptation, clamped at zero."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if not 0.0 <= max_similarity <= 1.0:
        raise ValueError("similarity must lie in [0, 1]")
    return max(0.0, lam + eta_tok * (max_similarity - e_target))


def draw_categorical(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Invert one uniform through the cumulative distribution (index order)."""
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(idx, probs.size - 1)


def _as_pool(
    pool: SteeringPool | Seq[str] | None,
    scorer: SimilarityScorer,
    cfg_aggregation: Aggregation,
    marking: PartialMarking,
) -> SteeringPool:
    if isinstance(pool, SteeringPool):
        return pool
    built = SteeringPool(scorer, cfg_aggregation, marking)
    for text in pool or []:
        built.add(text)
    return built


def _candidate_texts(prefix_text: str, token_texts: list[str]) -> list[str]:
    """Marked partial texts for each candidate continuation (EOS adds nothing)."""
    out = []
    for tok_text in token_texts:
        if tok_text:
            body = f"{prefix_text} {tok_text}" if prefix_text else tok_text
        else:
            body = prefix_text
        out.append(f"{body} {TRUNC_TEXT}" if body else TRUNC_TEXT)
    return out


def sample_sequence(
    model: ArmModel,
    scorer: SimilarityScorer,
    pool: SteeringPool | Seq[str] | None,
    cfg: ArmSamplerConfig,
    rng: np.random.Generator,
) -> SequenceSample:
    """Draw one sequence from the tilted proposal, recording per-token accounting."""
    pool = _as_pool(pool, scorer, cfg.aggregation, PartialMarking.TRUNC_SUFFIX)
    vocab = model.vocab
    eos = vocab.eos_id
    prefix: tuple[int, ...] = ()
    steps: list[TokenStep] = []
    lam = cfg.lambda0
    truncated = False
    while True:
        base = np.asarray(model.logits(prefix), dtype=np.float64)
        finite = np.flatnonzero(np.isfinite(base))
        if finite.size == 0:
            raise ValueError(f"model emitted no sampleable token at prefix {prefix}")
        logp_finite = log_softmax(base[finite])
        if cfg.top_k is None or cfg.top_k >= finite.size:
            support = np.arange(finite.size)
        else:
            order = np.argsort(-base[finite], kind="stable")
            support = np.sort(order[: cfg.top_k])
        support_tokens = finite[support]

        steer = cfg.steering_enabled and len(pool) > 0
        if steer:
            prefix_text = vocab.decode(prefix)
            token_texts = ["" if t == eos else vocab.token_text(int(t)) for t in support_tokens]
            penalties = pool.penalties(_candidate_texts(prefix_text, token_texts))
        else:
            penalties = np.zeros(support.size)

        logq_vec = tilt_logits(base[support_tokens], penalties, lam)
        idx = draw_categorical(rng, np.exp(logq_vec))
        token = int(support_tokens[idx])
        steps.append(
            TokenStep(
                token=token,
                logp_base=float(logp_finite[support[idx]]),
                logq=float(logq_vec[idx]),
                penalty=float(penalties[idx]),
                lam=lam,
            )
        )
        lam = update_lambda_token(lam, float(penalties[idx]), cfg.eta_tok, cfg.e_target)
        if token == eos:
            break
        prefix = prefix + (token,)
        if len(prefix) >= cfg.max_tokens:
            truncated = True
            logger.warning("sequence hit max_tokens=%d without EOS", cfg.max_tokens)
            break
    tokens = prefix + ((eos,) if not truncated else ())
    return SequenceSample(
        sequence=Sequence.from_tokens(tokens, vocab),
        steps=tuple(steps),
        origin=Origin.ARM,
        truncated=truncated,
    )


def sample_set(
    model: ArmModel,
    scorer: SimilarityScorer,
    cfg: ArmSamplerConfig,
    n: int,
    rng: np.random.Generator,
    pool: SteeringPool | None = None,
) -> SampleSet:
    """Draw ``n`` sequences, growing the steering pool by each finished answer."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pool = pool if pool is not None else SteeringPool(
        scorer, cfg.aggregation, PartialMarking.TRUNC_SUFFIX
    )
    samples = []
    for _ in range(n):
        s = sample_sequence(model, scorer, pool, cfg, rng)
        samples.append(s)
        pool.add(s.text)
    return SampleSet(samples)


def sample_pair_set(
    pair_world: PairedWorld,
    scorer: SimilarityScorer,
    cfg: ArmSamplerConfig,
    n: int,
    rng: np.random.Generator,
    conditional_scorer: SimilarityScorer | None = None,
) -> SampleSet:
    """Draw ``n`` answer pairs (first draw, then the conditional second draw).

    Each slot keeps its own steering pool, so first answers are pushed apart
    from previous first answers and likewise for second answers; the joint
    weight is the product of the two pathwise ratios.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    scorer2 = conditional_scorer if conditional_scorer is not None else scorer
    pool1 = SteeringPool(scorer, cfg.aggregation, PartialMarking.TRUNC_SUFFIX)
    pool2 = SteeringPool(scorer2, cfg.aggregation, PartialMarking.TRUNC_SUFFIX)
    pairs = []
    for _ in range(n):
        first = sample_sequence(pair_world.first.model, scorer, pool1, cfg, rng)
        second_model = pair_world.conditional(first.sequence.tokens)
        second = sample_sequence(second_model, scorer2, pool2, cfg, rng)
        pairs.append(SamplePair(first=first, second=second))
        pool1.add(first.text)
        pool2.add(second.text)
    return SampleSet(pairs)
