"""Diversity-steered masked-denoising sampling.

A draw starts from the fully-masked state and runs the model's schedule for
``T`` steps.  Within a step every scheduled position is filled by sampling
from the tilted per-position distribution, where a candidate's partial text
is the step-start state with that one candidate substituted and the remaining
masks left inline (``"a [MASK] [MASK]"``).  All fills inside a step condition
on the step-start state; commits happen at step end.  Positions within a step
are visited in ascending order, which pins down the tilt-strength and RNG
trajectory.

The pathwise importance ratio multiplies ``p(fill)/q(fill)`` over every fill
of the trajectory, so downstream weighting debiases functionals of the final
sequence exactly as in the autoregressive case.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence as Seq

import numpy as np

from .domain import Origin, SampleSet, Sequence, SequenceSample, TokenStep, Vocab
from .models import MdmModel
from .sampler_arm import draw_categorical, log_softmax, tilt_logits, update_lambda_token
from .similarity import Aggregation, PartialMarking, SimilarityScorer, SteeringPool

logger = logging.getLogger(__name__)


@dataclass
class MdmSamplerConfig:
    """Knobs for one denoising steering run (see the module docstring)."""

    lambda0: float = 0.0
    eta_tok: float = 0.1
    e_target: float = 0.3
    top_k: int | None = None
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

    @property
    def steering_enabled(self) -> bool:
        return self.lambda0 > 0 or self.eta_tok > 0


def build_intermediate(
    state: tuple[int, ...], position: int, candidate: int, vocab: Vocab
) -> str:
    """Text of ``state`` with ``candidate`` at ``position``, masks left inline."""
    if not 0 <= position < len(state):
        raise ValueError(f"position {position} outside state of length {len(state)}")
    if state[position] != vocab.mask_id:
        raise ValueError(f"position {position} is not masked")
    filled = list(state)
    filled[position] = candidate
    return vocab.decode(filled)


def sample_sequence_mdm(
    model: MdmModel,
    scorer: SimilarityScorer,
    pool: SteeringPool | Seq[str] | None,
    cfg: MdmSamplerConfig,
    rng: np.random.Generator,
) -> SequenceSample:
    """Denoise one sequence from the tilted proposal with full fill accounting."""
    if not isinstance(pool, SteeringPool):
        built = SteeringPool(scorer, cfg.aggregation, PartialMarking.MASK_INLINE)
        for text in pool or []:
            built.add(text)
        pool = built
    vocab = model.vocab
    state = tuple(model.initial_state())
    total_steps = getattr(model, "steps", None)
    lam = cfg.lambda0
    steps_rec: list[TokenStep] = []
    step_index = (total_steps - 1) if total_steps is not None else None
    while True:
        positions = model.schedule(state)
        if not positions:
            break
        step_start = state
        fills: dict[int, int] = {}
        for pos in sorted(positions):
            base = np.asarray(model.denoise_logits(step_start, pos), dtype=np.float64)
            finite = np.flatnonzero(np.isfinite(base))
            if finite.size == 0:
                raise ValueError(f"no sampleable fill at position {pos}")
            logp_finite = log_softmax(base[finite])
            if cfg.top_k is None or cfg.top_k >= finite.size:
                support = np.arange(finite.size)
            else:
                order = np.argsort(-base[finite], kind="stable")
                support = np.sort(order[: cfg.top_k])
            support_tokens = finite[support]

            steer = cfg.steering_enabled and len(pool) > 0
            if steer:
                texts = [
                    build_intermediate(step_start, pos, int(tok), vocab)
                    for tok in support_tokens
                ]
                penalties = pool.penalties(texts)
            else:
                penalties = np.zeros(support.size)

            logq_vec = tilt_logits(base[support_tokens], penalties, lam)
            idx = draw_categorical(rng, np.exp(logq_vec))
            token = int(support_tokens[idx])
            steps_rec.append(
                TokenStep(
                    token=token,
                    logp_base=float(logp_finite[support[idx]]),
                    logq=float(logq_vec[idx]),
                    penalty=float(penalties[idx]),
                    lam=lam,
                    step=step_index,
                    position=pos,
                )
            )
            lam = update_lambda_token(lam, float(penalties[idx]), cfg.eta_tok, cfg.e_target)
            fills[pos] = token
        committed = list(state)
        for pos, token in fills.items():
            committed[pos] = token
        state = tuple(committed)
        if step_index is not None:
            step_index -= 1
    if vocab.mask_id in state:
        raise RuntimeError("schedule exhausted but masked positions remain")
    return SequenceSample(
        sequence=Sequence.from_tokens(state, vocab),
        steps=tuple(steps_rec),
        origin=Origin.MDM,
    )


def sample_set_mdm(
    model: MdmModel,
    scorer: SimilarityScorer,
    cfg: MdmSamplerConfig,
    n: int,
    rng: np.random.Generator,
    pool: SteeringPool | None = None,
) -> SampleSet:
    """Draw ``n`` denoised sequences, growing the steering pool as they finish."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pool = pool if pool is not None else SteeringPool(
        scorer, cfg.aggregation, PartialMarking.MASK_INLINE
    )
    samples = []
    for _ in range(n):
        s = sample_sequence_mdm(model, scorer, pool, cfg, rng)
        samples.append(s)
        pool.add(s.text)
    return SampleSet(samples)
