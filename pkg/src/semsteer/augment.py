"""Partial-text training data for entailment checkers.

Scoring mid-generation prefixes and half-denoised states only works if the
checker has seen such inputs, so finished premise/hypothesis pairs are
expanded into marker-bearing variants:

* truncation unrolling - every proper whitespace prefix of one side, with the
  truncation marker appended (the intact pair is kept unmarked);
* mask variants - the intact pair plus ``k`` stochastic copies where one
  uniformly-chosen side has each token independently replaced by the mask
  marker with probability ``f ~ U(0, 1)`` drawn per variant.

Variant randomness is keyed by ``(seed, record_index, variant_index)``, so
corpora regenerate identically regardless of chunking or worker order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import MASK_TEXT, SCHEMA_VERSION, TRUNC_TEXT


@dataclass(frozen=True)
class NliPair:
    premise: str
    hypothesis: str
    label: str

    def __post_init__(self) -> None:
        if not self.premise.split() or not self.hypothesis.split():
            raise ValueError("premise and hypothesis must be non-empty")


def _record(pair: NliPair, premise: str, hypothesis: str, corruption: dict | None) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "kind": "nli_pair",
        "premise": premise,
        "hypothesis": hypothesis,
        "label": pair.label,
        "corruption": corruption,
    }


def unroll_truncations(pair: NliPair, marker: str = TRUNC_TEXT) -> list[dict]:
    """The intact pair plus every proper prefix of each side, marker-suffixed.

    For token lengths ``Lp``/``Lh`` this yields exactly
    ``1 + (Lh - 1) + (Lp - 1)`` records.
    """
    records = [_record(pair, pair.premise, pair.hypothesis, None)]
    hyp_tokens = pair.hypothesis.split()
    for cut in range(1, len(hyp_tokens)):
        truncated = " ".join(hyp_tokens[:cut]) + f" {marker}"
        records.append(
            _record(
                pair,
                pair.premise,
                truncated,
                {"side": "hypothesis", "mode": "truncation", "fraction_or_cut": cut},
            )
        )
    prem_tokens = pair.premise.split()
    for cut in range(1, len(prem_tokens)):
        truncated = " ".join(prem_tokens[:cut]) + f" {marker}"
        records.append(
            _record(
                pair,
                truncated,
                pair.hypothesis,
                {"side": "premise", "mode": "truncation", "fraction_or_cut": cut},
            )
        )
    return records


def sample_truncation(
    pair: NliPair, rng: np.random.Generator, marker: str = TRUNC_TEXT
) -> dict:
    """One random truncation: uniform side, uniform cut (the full length
    keeps the side intact and unmarked)."""
    side = "hypothesis" if rng.integers(2) else "premise"
    text = pair.hypothesis if side == "hypothesis" else pair.premise
    tokens = text.split()
    cut = int(rng.integers(1, len(tokens) + 1))
    if cut == len(tokens):
        return _record(pair, pair.premise, pair.hypothesis, None)
    truncated = " ".join(tokens[:cut]) + f" {marker}"
    corruption = {"side": side, "mode": "truncation", "fraction_or_cut": cut}
    if side == "hypothesis":
        return _record(pair, pair.premise, truncated, corruption)
    return _record(pair, truncated, pair.hypothesis, corruption)


def _variant_rng(seed: int, record_index: int, variant_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, record_index, variant_index)))


def mask_variants(
    pair: NliPair,
    k: int = 20,
    marker: str = MASK_TEXT,
    seed: int = 0,
    record_index: int = 0,
) -> list[dict]:
    """The intact pair plus ``k`` randomly mask-corrupted variants.

    Each variant corrupts exactly one side (never both): tokens on the chosen
    side are independently replaced by ``marker`` with probability ``f`` drawn
    once per variant from ``U(0, 1)``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    records = [_record(pair, pair.premise, pair.hypothesis, None)]
    for v in range(k):
        rng = _variant_rng(seed, record_index, v)
        side = "hypothesis" if rng.integers(2) else "premise"
        fraction = float(rng.uniform())
        text = pair.hypothesis if side == "hypothesis" else pair.premise
        tokens = [marker if rng.uniform() < fraction else tok for tok in text.split()]
        corrupted = " ".join(tokens)
        corruption = {"side": side, "mode": "mask", "fraction_or_cut": fraction}
        if side == "hypothesis":
            records.append(_record(pair, pair.premise, corrupted, corruption))
        else:
            records.append(_record(pair, corrupted, pair.hypothesis, corruption))
    return records


def pair_from_record(record: dict) -> NliPair:
    return NliPair(
        premise=record["premise"], hypothesis=record["hypothesis"], label=record["label"]
    )
