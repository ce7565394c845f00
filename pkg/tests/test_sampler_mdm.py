"""Masked-denoising sampler: schedules, intermediates, and bias accounting."""

import math

import numpy as np
import pytest

from semsteer.domain import letter_vocab
from semsteer.models import TabularMdmModel, enumerate_distribution
from semsteer.sampler_mdm import (
    MdmSamplerConfig,
    build_intermediate,
    sample_sequence_mdm,
    sample_set_mdm,
)
from semsteer.similarity import OracleScorer, SimilarityScorer

from tests.conftest import HAND_SE

# p(a at pos 0) * p(b at pos 1 | a) = 0.7 * 0.8, frozen at 50 digits.
HAND_LOGP_AB = -0.5798184952529422


class TestBuildIntermediate:
    def test_substitutes_and_keeps_masks_inline(self):
        vocab = letter_vocab(3)
        mask = vocab.mask_id
        state = (mask, 1, mask)
        assert build_intermediate(state, 0, 2, vocab) == "c b [MASK]"
        assert build_intermediate(state, 2, 0, vocab) == "[MASK] b a"

    def test_position_bounds(self):
        vocab = letter_vocab(2)
        with pytest.raises(ValueError, match="outside"):
            build_intermediate((vocab.mask_id,), 1, 0, vocab)

    def test_rejects_filled_position(self):
        vocab = letter_vocab(2)
        with pytest.raises(ValueError, match="not masked"):
            build_intermediate((0, vocab.mask_id), 0, 1, vocab)


class SpyScorer(SimilarityScorer):
    def __init__(self, inner):
        self.inner = inner
        self.pairs = []
        self.supports_partial = inner.supports_partial

    def entail(self, premise, hypothesis):
        self.pairs.append((premise, hypothesis))
        return self.inner.entail(premise, hypothesis)


class TestSampleSequence:
    def test_lambda_zero_reduction_is_bitwise(self, hand_mdm_world):
        scorer = OracleScorer(hand_mdm_world)
        cfg = MdmSamplerConfig(lambda0=0.0, eta_tok=0.0)
        rng = np.random.default_rng(0)
        for _ in range(200):
            s = sample_sequence_mdm(hand_mdm_world.model, scorer, ["a a"], cfg, rng)
            for step in s.steps:
                assert step.logq == step.logp_base
            assert s.log_ratio == 0.0

    def test_step_and_position_bookkeeping(self, hand_mdm_world):
        scorer = OracleScorer(hand_mdm_world)
        cfg = MdmSamplerConfig(lambda0=0.0, eta_tok=0.0)
        s = sample_sequence_mdm(hand_mdm_world.model, scorer, None, cfg, np.random.default_rng(1))
        assert [st.step for st in s.steps] == [1, 0]  # counts down to zero
        assert [st.position for st in s.steps] == [0, 1]
        assert s.origin.value == "mdm"
        assert not s.truncated

    def test_pathwise_logp_matches_the_table(self, hand_mdm_world):
        scorer = OracleScorer(hand_mdm_world)
        cfg = MdmSamplerConfig(lambda0=0.0, eta_tok=0.0)
        rng = np.random.default_rng(2)
        seen = set()
        for _ in range(100):
            s = sample_sequence_mdm(hand_mdm_world.model, scorer, None, cfg, rng)
            seen.add(s.text)
            if s.sequence.tokens == (0, 1):
                assert s.logp == pytest.approx(HAND_LOGP_AB, rel=1e-12)
        assert seen == {"a a", "a b", "b a", "b b"}

    def test_frequencies_match_enumeration(self, hand_mdm_world):
        dist = enumerate_distribution(hand_mdm_world)
        scorer = OracleScorer(hand_mdm_world)
        cfg = MdmSamplerConfig(lambda0=0.0, eta_tok=0.0)
        rng = np.random.default_rng(3)
        draws = 20_000
        hits = 0
        for _ in range(draws):
            s = sample_sequence_mdm(hand_mdm_world.model, scorer, None, cfg, rng)
            hits += s.sequence.tokens == (0, 1)
        p = dist[(0, 1)]
        sigma = math.sqrt(p * (1 - p) / draws)
        assert abs(hits / draws - p) < 3 * sigma

    def test_intermediates_carry_masks_inline(self, hand_mdm_world):
        spy = SpyScorer(OracleScorer(hand_mdm_world))
        cfg = MdmSamplerConfig(lambda0=1.0, eta_tok=0.0)
        rng = np.random.default_rng(4)
        for _ in range(50):
            sample_sequence_mdm(hand_mdm_world.model, spy, ["a a", "b b"], cfg, rng)
        assert spy.pairs
        allowed = {
            "a [MASK]", "b [MASK]",  # filling position 0 at the first step
            "a a", "a b", "b a", "b b",  # filling position 1 at the last step
            # pool answers appear on the other side of each pair
        }
        for premise, hypothesis in spy.pairs:
            assert premise in allowed and hypothesis in allowed

    def test_single_step_fills_condition_on_step_start(self):
        """With steps=1 both fills see the fully-masked state, so the joint
        law is the product of the two initial-state rows."""
        vocab = letter_vocab(2)
        mask = vocab.mask_id

        def row(pairs):
            vec = np.full(vocab.size, -np.inf)
            for tok, p in pairs.items():
                vec[tok] = np.log(p)
            return vec

        table = {
            ((mask, mask), 0): row({0: 0.9, 1: 0.1}),
            ((mask, mask), 1): row({0: 0.25, 1: 0.75}),
        }
        model = TabularMdmModel(vocab, length=2, steps=1, table=table, order=(0, 1))
        from semsteer.domain import Origin
        from semsteer.models import WorldSpec

        world = WorldSpec(kind=Origin.MDM, vocab=vocab, model=model,
                          labels={(a, b): a for a in (0, 1) for b in (0, 1)})
        dist = enumerate_distribution(world)
        assert dist[(0, 1)] == pytest.approx(0.9 * 0.75, rel=1e-12)

        scorer = OracleScorer(world)
        cfg = MdmSamplerConfig(lambda0=0.0, eta_tok=0.0)
        rng = np.random.default_rng(5)
        s = sample_sequence_mdm(model, scorer, None, cfg, rng)
        assert [st.step for st in s.steps] == [0, 0]
        expected = {0: {0: 0.9, 1: 0.1}, 1: {0: 0.25, 1: 0.75}}
        for st in s.steps:
            assert st.logp_base == pytest.approx(
                math.log(expected[st.position][st.token]), rel=1e-12
            )

    def test_incomplete_schedule_rejected(self):
        vocab = letter_vocab(2)

        class StallingModel:
            def __init__(self):
                self.vocab = vocab

            def initial_state(self):
                return (vocab.mask_id, vocab.mask_id)

            def schedule(self, state):
                return [] if state[0] != vocab.mask_id else [0]

            def denoise_logits(self, state, position):
                vec = np.full(vocab.size, -np.inf)
                vec[0] = 0.0
                return vec

        world_scorer = OracleScorer.__new__(OracleScorer)  # never consulted
        cfg = MdmSamplerConfig(lambda0=0.0, eta_tok=0.0)
        with pytest.raises(RuntimeError, match="masked positions remain"):
            sample_sequence_mdm(StallingModel(), world_scorer, None, cfg, np.random.default_rng(0))


class TestSampleSetMdm:
    def test_pool_grows_and_lambda_resets(self, hand_mdm_world):
        scorer = OracleScorer(hand_mdm_world)
        cfg = MdmSamplerConfig(lambda0=0.6, eta_tok=0.3)
        sset = sample_set_mdm(hand_mdm_world.model, scorer, cfg, 8, np.random.default_rng(6))
        assert sset.n == 8
        assert all(step.penalty == 0.0 for step in sset.samples[0].steps)
        assert any(step.penalty > 0.0 for s in sset.samples[1:] for step in s.steps)
        for s in sset.samples:
            assert s.steps[0].lam == pytest.approx(0.6)

    def test_weighted_estimate_is_consistent(self, hand_mdm_world):
        scorer = OracleScorer(hand_mdm_world)
        cfg = MdmSamplerConfig(lambda0=1.5, eta_tok=0.0)
        sset = sample_set_mdm(hand_mdm_world.model, scorer, cfg, 3000, np.random.default_rng(7))
        w = sset.normalized_weights
        mass_c0 = sum(
            wi for wi, s in zip(w, sset.samples)
            if hand_mdm_world.label_of(s.sequence.tokens) == 0
        )
        assert mass_c0 == pytest.approx(0.7, abs=0.03)
        probs = np.array([mass_c0, 1.0 - mass_c0])
        assert -np.sum(probs * np.log(probs)) == pytest.approx(HAND_SE, abs=0.03)
