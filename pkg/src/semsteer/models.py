"""Sequence-model backends: tabular synthetic worlds and a remote logits client.

Synthetic worlds are small enough to enumerate exactly, which is what makes
the estimator checks in the test suite possible: every world exposes its full
sequence distribution, its cluster probabilities, and (for paired worlds) the
exact cluster-level mutual information.

Two paradigms are supported:

* autoregressive (ARM): next-token tables over prefixes, sequences end with
  EOS exactly once;
* masked-denoising (MDM): per-(state, position) fill tables plus a schedule
  that decides which masked positions are filled at each of ``T`` steps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import numpy as np
import requests

from ._net import post_json
from .domain import Origin, ProtocolError, Vocab, letter_vocab

logger = logging.getLogger(__name__)

MAX_ENUMERABLE_STATES = 1_000_000


@runtime_checkable
class ArmModel(Protocol):
    """Anything that can produce next-token logits for a content-token prefix."""

    vocab: Vocab

    def logits(self, prefix: tuple[int, ...]) -> np.ndarray:
        """Full-vocab logit vector; ``-inf`` marks unsampleable ids."""
        ...


@runtime_checkable
class MdmModel(Protocol):
    """Denoising model: per-position fill logits plus a fill schedule."""

    vocab: Vocab

    def initial_state(self) -> tuple[int, ...]:
        """The fully-masked starting state."""
        ...

    def denoise_logits(self, state: tuple[int, ...], position: int) -> np.ndarray: ...

    def schedule(self, state: tuple[int, ...]) -> list[int]:
        """Masked positions to fill this step (empty once the state is complete)."""
        ...


class TabularArmModel:
    """Autoregressive model backed by an explicit per-prefix probability table."""

    def __init__(self, vocab: Vocab, table: dict[tuple[int, ...], np.ndarray], max_len: int):
        self.vocab = vocab
        self.max_len = max_len
        self._table = table

    @classmethod
    def from_probs(
        cls,
        vocab: Vocab,
        probs: dict[tuple[int, ...], dict[int, float]],
        max_len: int,
    ) -> "TabularArmModel":
        """Build from per-prefix ``{token_id: probability}`` rows (rows sum to 1)."""
        table = {}
        for prefix, row in probs.items():
            vec = np.full(vocab.size, -np.inf)
            total = 0.0
            for tok, p in row.items():
                if p > 0.0:
                    vec[tok] = math.log(p)
                    total += p
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"row for prefix {prefix} sums to {total}, not 1")
            table[prefix] = vec
        return cls(vocab, table, max_len)

    def logits(self, prefix: tuple[int, ...]) -> np.ndarray:
        try:
            return self._table[tuple(prefix)]
        except KeyError:
            raise ValueError(f"prefix {prefix} not reachable in this world") from None

    def prefixes(self) -> list[tuple[int, ...]]:
        return list(self._table)


class TabularMdmModel:
    """Denoising model backed by per-(state, position) fill tables.

    The schedule splits the ``length`` positions into ``steps`` groups.  Fill
    order within the whole run is either left-to-right or a fixed permutation
    drawn once at construction, so a given state always schedules the same
    positions: that keeps trajectories enumerable.
    """

    def __init__(
        self,
        vocab: Vocab,
        length: int,
        steps: int,
        table: dict[tuple[tuple[int, ...], int], np.ndarray],
        order: tuple[int, ...],
    ):
        if not 1 <= steps <= length:
            raise ValueError("steps must be in 1..length")
        self.vocab = vocab
        self.length = length
        self.steps = steps
        self._table = table
        self._order = order
        base, extra = divmod(length, steps)
        self._group_sizes = [base + (1 if i < extra else 0) for i in range(steps)]

    def initial_state(self) -> tuple[int, ...]:
        return (self.vocab.mask_id,) * self.length

    def schedule(self, state: tuple[int, ...]) -> list[int]:
        mask = self.vocab.mask_id
        filled = sum(1 for t in state if t != mask)
        if filled == self.length:
            return []
        done = 0
        for size in self._group_sizes:
            if done == filled:
                group = self._order[done : done + size]
                return sorted(group)
            done += size
        raise ValueError(f"state fill count {filled} does not align with the schedule")

    def denoise_logits(self, state: tuple[int, ...], position: int) -> np.ndarray:
        if state[position] != self.vocab.mask_id:
            raise ValueError(f"position {position} is not masked")
        try:
            return self._table[(tuple(state), position)]
        except KeyError:
            raise ValueError(f"state {state} not reachable under the schedule") from None


@dataclass
class WorldSpec:
    """A fully-specified synthetic world: model, paradigm, and cluster labels.

    ``labels`` assigns every reachable finished sequence (content-token tuple,
    EOS excluded) to a semantic cluster id in ``0..n_clusters-1``.
    """

    kind: Origin
    vocab: Vocab
    model: TabularArmModel | TabularMdmModel
    labels: dict[tuple[int, ...], int]

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("world has no labeled sequences")

    @property
    def n_clusters(self) -> int:
        return max(self.labels.values()) + 1

    def label_of(self, tokens: tuple[int, ...]) -> int:
        try:
            return self.labels[tuple(tokens)]
        except KeyError:
            raise ValueError(f"sequence {tokens} is not labeled in this world") from None


def _check_enumerable(n_content: int, length: int) -> None:
    bound = n_content**length
    if bound > MAX_ENUMERABLE_STATES:
        raise ValueError(
            f"state space too large to enumerate: {n_content}^{length} = {bound} "
            f"> {MAX_ENUMERABLE_STATES}"
        )


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits)
    shifted = logits - m
    return shifted - math.log(np.sum(np.exp(shifted)))


def enumerate_distribution(world: WorldSpec) -> dict[tuple[int, ...], float]:
    """Exact probability of every reachable finished sequence.

    For ARM worlds this walks the prefix tree to EOS; for MDM worlds it walks
    the denoising schedule.  Probabilities sum to one within 1e-12.
    """
    if world.kind is Origin.ARM:
        dist = _enumerate_arm(world.model)
    else:
        dist = _enumerate_mdm(world.model)
    total = sum(dist.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"enumerated mass is {total}, not 1 - model table is inconsistent")
    return dist


def _enumerate_arm(model: TabularArmModel) -> dict[tuple[int, ...], float]:
    _check_enumerable(model.vocab.n_content, model.max_len)
    eos = model.vocab.eos_id
    out: dict[tuple[int, ...], float] = {}
    stack: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    while stack:
        prefix, lp = stack.pop()
        if len(prefix) > model.max_len:
            raise ValueError("prefix exceeded max_len during enumeration")
        logprobs = _log_softmax(model.logits(prefix))
        for tok in np.flatnonzero(np.isfinite(logprobs)):
            tok = int(tok)
            if tok == eos:
                out[prefix] = out.get(prefix, 0.0) + math.exp(lp + logprobs[tok])
            else:
                stack.append((prefix + (tok,), lp + float(logprobs[tok])))
    return out


def _enumerate_mdm(model: TabularMdmModel) -> dict[tuple[int, ...], float]:
    _check_enumerable(model.vocab.n_content, model.length)
    out: dict[tuple[int, ...], float] = {}

    def expand(state: tuple[int, ...], lp: float) -> None:
        positions = model.schedule(state)
        if not positions:
            out[state] = out.get(state, 0.0) + math.exp(lp)
            return
        # All fills within a step condition on the step-start state.
        per_pos = [_log_softmax(model.denoise_logits(state, pos)) for pos in positions]
        choices = [np.flatnonzero(np.isfinite(lps)) for lps in per_pos]

        def branch(i: int, acc: tuple[int, ...], lp_acc: float) -> None:
            if i == len(positions):
                nxt = list(state)
                for pos, tok in zip(positions, acc):
                    nxt[pos] = tok
                expand(tuple(nxt), lp_acc)
                return
            for tok in choices[i]:
                branch(i + 1, acc + (int(tok),), lp_acc + float(per_pos[i][tok]))

        branch(0, (), lp)

    expand(model.initial_state(), 0.0)
    return out


def exact_cluster_probs(world: WorldSpec) -> dict[int, float]:
    """Ground-truth semantic-cluster probabilities, by exhaustive enumeration."""
    probs: dict[int, float] = {}
    for seq, p in enumerate_distribution(world).items():
        label = world.label_of(seq)
        probs[label] = probs.get(label, 0.0) + p
    return probs


def exact_semantic_entropy(world: WorldSpec) -> float:
    """Ground-truth cluster entropy (nats)."""
    return float(-sum(p * math.log(p) for p in exact_cluster_probs(world).values() if p > 0))


def exact_sequence_surprisal_mean(world: WorldSpec) -> float:
    """``E_p[-log p(y)]``: the exact mean of the control statistic used for SE."""
    return float(-sum(p * math.log(p) for p in enumerate_distribution(world).values() if p > 0))


# ---------------------------------------------------------------------------
# World builders
# ---------------------------------------------------------------------------


def _assign_labels(
    sequences: list[tuple[int, ...]],
    n_clusters: int,
    label_by: str,
    rng: np.random.Generator,
) -> dict[tuple[int, ...], int]:
    labels: dict[tuple[int, ...], int] = {}
    for seq in sequences:
        if label_by == "random":
            labels[seq] = int(rng.integers(n_clusters))
        elif label_by == "first_token":
            labels[seq] = seq[0] % n_clusters
        elif label_by == "last_token":
            labels[seq] = seq[-1] % n_clusters
        elif label_by == "sum_mod":
            labels[seq] = sum(seq) % n_clusters
        else:
            raise ValueError(f"unknown labeling rule {label_by!r}")
    present = set(labels.values())
    missing = [c for c in range(n_clusters) if c not in present]
    if missing:
        # Re-home a few sequences so every cluster is populated.
        seqs = sorted(labels)
        for i, c in enumerate(missing):
            labels[seqs[i % len(seqs)]] = c
    return labels


def random_arm_world(
    n_content: int,
    max_len: int,
    n_clusters: int,
    seed: int,
    *,
    eos_rate: float = 0.25,
    concentration: float = 2.0,
    label_by: str = "random",
) -> WorldSpec:
    """A random enumerable ARM world with variable-length sequences.

    EOS is unavailable at length 0 (so sequences are never empty) and forced
    at ``max_len``; in between it carries roughly ``eos_rate`` probability.
    """
    _check_enumerable(n_content, max_len)
    vocab = letter_vocab(n_content)
    rng = np.random.default_rng(seed)
    probs: dict[tuple[int, ...], dict[int, float]] = {}

    def build(prefix: tuple[int, ...]) -> None:
        row: dict[int, float] = {}
        if len(prefix) == max_len:
            row[vocab.eos_id] = 1.0
        else:
            cont = rng.dirichlet(np.full(n_content, concentration))
            p_eos = 0.0 if not prefix else float(np.clip(rng.normal(eos_rate, eos_rate / 4), 0.02, 0.9))
            for tok in range(n_content):
                row[tok] = float(cont[tok]) * (1.0 - p_eos)
            if p_eos > 0.0:
                row[vocab.eos_id] = p_eos
        probs[prefix] = row
        for tok in range(n_content):
            if row.get(tok, 0.0) > 0.0:
                build(prefix + (tok,))

    build(())
    model = TabularArmModel.from_probs(vocab, probs, max_len)
    sequences = sorted(_enumerate_arm(model))
    labels = _assign_labels(sequences, n_clusters, label_by, rng)
    return WorldSpec(kind=Origin.ARM, vocab=vocab, model=model, labels=labels)


def fixed_length_arm_world(
    conditionals: list[np.ndarray],
    n_clusters: int,
    *,
    label_by: str = "last_token",
    seed: int = 0,
) -> WorldSpec:
    """An ARM world with exactly ``len(conditionals)`` content tokens per draw.

    ``conditionals[k]`` gives the distribution over content tokens at position
    ``k`` (shared across prefixes), which keeps the world easy to reason about
    analytically.  EOS only appears once the full length is reached.
    """
    n_content = len(conditionals[0])
    _check_enumerable(n_content, len(conditionals))
    vocab = letter_vocab(n_content)
    rng = np.random.default_rng(seed)
    probs: dict[tuple[int, ...], dict[int, float]] = {}

    def build(prefix: tuple[int, ...]) -> None:
        if len(prefix) == len(conditionals):
            probs[prefix] = {vocab.eos_id: 1.0}
            return
        row = conditionals[len(prefix)]
        if abs(float(np.sum(row)) - 1.0) > 1e-9:
            raise ValueError("conditional rows must sum to 1")
        probs[prefix] = {tok: float(p) for tok, p in enumerate(row) if p > 0}
        for tok, p in enumerate(row):
            if p > 0:
                build(prefix + (tok,))

    build(())
    model = TabularArmModel.from_probs(vocab, probs, len(conditionals))
    sequences = sorted(_enumerate_arm(model))
    labels = _assign_labels(sequences, n_clusters, label_by, rng)
    return WorldSpec(kind=Origin.ARM, vocab=vocab, model=model, labels=labels)


def point_mass_arm_model(vocab: Vocab, tokens: tuple[int, ...]) -> TabularArmModel:
    """A degenerate ARM model that emits exactly ``tokens`` then EOS."""
    probs: dict[tuple[int, ...], dict[int, float]] = {}
    for k in range(len(tokens)):
        probs[tokens[:k]] = {tokens[k]: 1.0}
    probs[tokens] = {vocab.eos_id: 1.0}
    return TabularArmModel.from_probs(vocab, probs, len(tokens))


def random_mdm_world(
    n_content: int,
    length: int,
    steps: int,
    n_clusters: int,
    seed: int,
    *,
    concentration: float = 2.0,
    label_by: str = "random",
    order: str = "ltr",
) -> WorldSpec:
    """A random enumerable MDM world with a deterministic fill schedule."""
    _check_enumerable(n_content, length)
    vocab = letter_vocab(n_content)
    rng = np.random.default_rng(seed)
    perm = tuple(range(length)) if order == "ltr" else tuple(rng.permutation(length))
    table: dict[tuple[tuple[int, ...], int], np.ndarray] = {}
    model = TabularMdmModel(vocab, length, steps, table, perm)

    def build(state: tuple[int, ...]) -> None:
        positions = model.schedule(state)
        if not positions:
            return
        per_pos = {}
        for pos in positions:
            key = (state, pos)
            if key not in table:
                vec = np.full(vocab.size, -np.inf)
                cont = rng.dirichlet(np.full(n_content, concentration))
                vec[:n_content] = np.log(cont)
                table[key] = vec
            per_pos[pos] = table[key]

        def branch(i: int, st: list[int]) -> None:
            if i == len(positions):
                build(tuple(st))
                return
            pos = positions[i]
            for tok in range(n_content):
                st[pos] = tok
                branch(i + 1, st)
            st[pos] = vocab.mask_id

        branch(0, list(state))

    build(model.initial_state())
    sequences = sorted(_enumerate_mdm(model))
    labels = _assign_labels(sequences, n_clusters, label_by, rng)
    return WorldSpec(kind=Origin.MDM, vocab=vocab, model=model, labels=labels)


@dataclass
class PairedWorld:
    """A joint world over answer pairs: first draw, then a conditional second."""

    first: WorldSpec
    conditional: Callable[[tuple[int, ...]], TabularArmModel]
    second_labels: dict[tuple[int, ...], int] | None = None

    def label_pair(self, y1: tuple[int, ...], y2: tuple[int, ...]) -> tuple[int, int]:
        second = self.second_labels if self.second_labels is not None else self.first.labels
        return (self.first.label_of(y1), second[tuple(y2)])


def independent_pair_world(world: WorldSpec) -> PairedWorld:
    """Second answer drawn from the same world, independent of the first."""
    return PairedWorld(first=world, conditional=lambda _y1: world.model)


def copy_pair_world(world: WorldSpec) -> PairedWorld:
    """Second answer deterministically repeats the first."""
    cache: dict[tuple[int, ...], TabularArmModel] = {}

    def conditional(y1: tuple[int, ...]) -> TabularArmModel:
        key = tuple(y1)
        if key not in cache:
            cache[key] = point_mass_arm_model(world.vocab, key)
        return cache[key]

    return PairedWorld(first=world, conditional=conditional)


def enumerate_joint_distribution(
    pair_world: PairedWorld,
) -> dict[tuple[tuple[int, ...], tuple[int, ...]], float]:
    """Exact joint probability of every reachable answer pair."""
    first_dist = enumerate_distribution(pair_world.first)
    out = {}
    for y1, p1 in first_dist.items():
        second = _enumerate_arm(pair_world.conditional(y1))
        for y2, p2 in second.items():
            out[(y1, y2)] = p1 * p2
    return out


def exact_joint_cluster_probs(pair_world: PairedWorld) -> dict[tuple[int, int], float]:
    probs: dict[tuple[int, int], float] = {}
    for (y1, y2), p in enumerate_joint_distribution(pair_world).items():
        key = pair_world.label_pair(y1, y2)
        probs[key] = probs.get(key, 0.0) + p
    return probs


def exact_mutual_information(pair_world: PairedWorld) -> float:
    """Ground-truth cluster-level mutual information of a paired world (nats)."""
    joint = exact_joint_cluster_probs(pair_world)
    m1: dict[int, float] = {}
    m2: dict[int, float] = {}
    for (a, b), p in joint.items():
        m1[a] = m1.get(a, 0.0) + p
        m2[b] = m2.get(b, 0.0) + p
    return float(
        sum(p * math.log(p / (m1[a] * m2[b])) for (a, b), p in joint.items() if p > 0)
    )


def exact_pair_surprisal_mean(pair_world: PairedWorld) -> float:
    """``E_p[-log p(y1, y2)]``: exact mean of the MI control statistic."""
    return float(
        -sum(p * math.log(p) for p in enumerate_joint_distribution(pair_world).values() if p > 0)
    )


# ---------------------------------------------------------------------------
# Remote backend
# ---------------------------------------------------------------------------


@dataclass
class RemoteLogits:
    """Sparse top-k next-token distribution returned by a logits service."""

    ids: list[int]
    logprobs: np.ndarray
    decoded: list[str]
    retries: int


def remote_logits(
    endpoint: str,
    prefix_text: str,
    top_k: int,
    *,
    prefix_ids: list[int] | None = None,
    timeout: float = 30.0,
    retries: int = 3,
    backoff: float = 0.25,
    session: requests.Session | None = None,
    sleeper=None,
) -> RemoteLogits:
    """Fetch top-k next-token log-probabilities (nats) from a logits service.

    The response must carry exactly ``top_k`` entries; anything else is a
    protocol error rather than a silent truncation.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    payload: dict = {"prefix_text": prefix_text, "top_k": top_k}
    if prefix_ids is not None:
        payload["prefix_ids"] = list(prefix_ids)
    kwargs: dict = dict(timeout=timeout, retries=retries, backoff=backoff, session=session)
    if sleeper is not None:
        kwargs["sleeper"] = sleeper
    body, attempts = post_json(endpoint.rstrip("/") + "/v1/logits", payload, **kwargs)
    try:
        ids = [int(i) for i in body["ids"]]
        logprobs = np.asarray(body["logprobs"], dtype=np.float64)
        decoded = [str(t) for t in body["decoded"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed logits response: {exc}") from exc
    if not (len(ids) == logprobs.size == len(decoded)):
        raise ProtocolError("logits response fields have mismatched lengths")
    if len(ids) != top_k:
        raise ProtocolError(f"requested top_k={top_k} but response carries {len(ids)}")
    if not np.all(np.isfinite(logprobs)) or np.any(logprobs > 1e-6):
        raise ProtocolError("logprobs must be finite natural-log probabilities")
    if np.logaddexp.reduce(logprobs) > 1e-6:
        raise ProtocolError("top-k probability mass exceeds 1")
    return RemoteLogits(ids=ids, logprobs=logprobs, decoded=decoded, retries=attempts)


class RemoteArmModel:
    """ARM backend over a logits service; unreturned ids get ``-inf`` logits."""

    def __init__(
        self,
        endpoint: str,
        vocab: Vocab,
        top_k: int,
        *,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.25,
    ):
        self.endpoint = endpoint
        self.vocab = vocab
        self.top_k = min(top_k, vocab.n_content + 1)
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = requests.Session()

    def logits(self, prefix: tuple[int, ...]) -> np.ndarray:
        reply = remote_logits(
            self.endpoint,
            self.vocab.decode(prefix),
            self.top_k,
            prefix_ids=list(prefix),
            timeout=self.timeout,
            retries=self.retries,
            backoff=self.backoff,
            session=self._session,
        )
        vec = np.full(self.vocab.size, -np.inf)
        for tok, lp in zip(reply.ids, reply.logprobs):
            if not 0 <= tok < self.vocab.size:
                raise ProtocolError(f"token id {tok} outside vocab of size {self.vocab.size}")
            vec[tok] = lp
        return vec
