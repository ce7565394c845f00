"""Shared fixtures: tiny hand-specified worlds with closed-form answers.

Both worlds put cluster mass (0.7, 0.3) on two meaning clusters, so their
exact semantic entropy is the frozen value ``HAND_SE`` computed out-of-band
at 50-digit precision.
"""

import numpy as np
import pytest

from semsteer.domain import Origin, letter_vocab
from semsteer.models import TabularArmModel, TabularMdmModel, WorldSpec

# -(0.7 ln 0.7 + 0.3 ln 0.3), frozen from a high-precision computation.
HAND_SE = 0.6108643020548935


def build_hand_arm_world() -> WorldSpec:
    """Three sequences: "a" (p=.5, cluster 0), "b a" (.3, c1), "b b" (.2, c0)."""
    vocab = letter_vocab(2)
    a, b, eos = 0, 1, vocab.eos_id
    model = TabularArmModel.from_probs(
        vocab,
        {
            (): {a: 0.5, b: 0.5},
            (a,): {eos: 1.0},
            (b,): {a: 0.6, b: 0.4},
            (b, a): {eos: 1.0},
            (b, b): {eos: 1.0},
        },
        max_len=2,
    )
    labels = {(a,): 0, (b, a): 1, (b, b): 0}
    return WorldSpec(kind=Origin.ARM, vocab=vocab, model=model, labels=labels)


def build_hand_mdm_world() -> WorldSpec:
    """Two positions, two steps, left-to-right; first token decides the cluster."""
    vocab = letter_vocab(2)
    a, b, mask = 0, 1, vocab.mask_id

    def row(pairs: dict[int, float]) -> np.ndarray:
        vec = np.full(vocab.size, -np.inf)
        for tok, p in pairs.items():
            vec[tok] = np.log(p)
        return vec

    table = {
        ((mask, mask), 0): row({a: 0.7, b: 0.3}),
        ((a, mask), 1): row({a: 0.2, b: 0.8}),
        ((b, mask), 1): row({a: 0.5, b: 0.5}),
    }
    model = TabularMdmModel(vocab, length=2, steps=2, table=table, order=(0, 1))
    labels = {(a, a): 0, (a, b): 0, (b, a): 1, (b, b): 1}
    return WorldSpec(kind=Origin.MDM, vocab=vocab, model=model, labels=labels)


@pytest.fixture
def hand_arm_world() -> WorldSpec:
    return build_hand_arm_world()


@pytest.fixture
def hand_mdm_world() -> WorldSpec:
    return build_hand_mdm_world()
