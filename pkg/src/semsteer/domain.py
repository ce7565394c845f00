"""Shared vocabulary of types for samplers, estimators, and trace files.

Everything downstream (samplers, clustering, estimators, CLI) speaks in the
types defined here: token ids against a :class:`Vocab`, per-token proposal
records, weighted sample sets, and the report record that gets serialized to
disk.  Log-probabilities are natural-log throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

import numpy as np
from scipy.special import logsumexp

SCHEMA_VERSION = "semsteer/1"

# Reserved token strings shared by every vocabulary.  MASK marks an unfilled
# position in a denoising state; TRUNC marks a decoded prefix as unfinished.
BOS_TEXT = "<bos>"
EOS_TEXT = "<eos>"
MASK_TEXT = "[MASK]"
TRUNC_TEXT = "[TRUNC]"


class TransportError(RuntimeError):
    """A remote backend could not be reached after the configured retries."""


class ProtocolError(RuntimeError):
    """A remote backend answered, but the payload violates the wire contract."""


class TraceError(RuntimeError):
    """A trace/report file is corrupt.  Carries the path and byte offset."""

    def __init__(self, path: str, offset: int, reason: str):
        super().__init__(f"{path}: corrupt record at byte {offset}: {reason}")
        self.path = str(path)
        self.offset = offset
        self.reason = reason


class Origin(str, Enum):
    """Which sampling paradigm produced a sequence."""

    ARM = "arm"
    MDM = "mdm"


@dataclass(frozen=True)
class Vocab:
    """Token table: content tokens first, then the four reserved tokens.

    Content ids are ``0 .. len(content)-1``; BOS/EOS/MASK/TRUNC follow in that
    order.  ``decode`` drops BOS/EOS (they carry no surface text) and renders
    MASK/TRUNC by their bracketed marker strings.
    """

    content: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.content)) != len(self.content):
            raise ValueError("duplicate content token")
        for tok in self.content:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"content token {tok!r} must be non-empty and space-free")

    @property
    def n_content(self) -> int:
        return len(self.content)

    @property
    def size(self) -> int:
        return len(self.content) + 4

    @property
    def bos_id(self) -> int:
        return len(self.content)

    @property
    def eos_id(self) -> int:
        return len(self.content) + 1

    @property
    def mask_id(self) -> int:
        return len(self.content) + 2

    @property
    def trunc_id(self) -> int:
        return len(self.content) + 3

    def token_text(self, token: int) -> str:
        if 0 <= token < len(self.content):
            return self.content[token]
        if token == self.bos_id:
            return BOS_TEXT
        if token == self.eos_id:
            return EOS_TEXT
        if token == self.mask_id:
            return MASK_TEXT
        if token == self.trunc_id:
            return TRUNC_TEXT
        raise ValueError(f"token id {token} out of range for vocab of size {self.size}")

    def decode(self, tokens: Iterable[int]) -> str:
        """Render token ids as text; BOS/EOS are dropped, markers kept inline."""
        parts = []
        for tok in tokens:
            if tok == self.bos_id or tok == self.eos_id:
                continue
            parts.append(self.token_text(tok))
        return " ".join(parts)

    def encode(self, text: str) -> tuple[int, ...]:
        """Inverse of :meth:`decode` for marker-bearing synthetic text."""
        ids = []
        lookup = {tok: i for i, tok in enumerate(self.content)}
        for piece in text.split():
            if piece == MASK_TEXT:
                ids.append(self.mask_id)
            elif piece == TRUNC_TEXT:
                ids.append(self.trunc_id)
            elif piece in lookup:
                ids.append(lookup[piece])
            else:
                raise ValueError(f"unlabelable text: unknown token {piece!r}")
        return tuple(ids)


def letter_vocab(n_content: int) -> Vocab:
    """A small vocabulary of single-letter content tokens (``n_content <= 16``)."""
    if not 1 <= n_content <= 16:
        raise ValueError("letter vocab supports 1..16 content tokens")
    return Vocab(tuple("abcdefghijklmnop"[:n_content]))


@dataclass(frozen=True)
class Sequence:
    """A finished piece of generated content: token ids plus decoded text."""

    tokens: tuple[int, ...]
    text: str

    @classmethod
    def from_tokens(cls, tokens: Iterable[int], vocab: Vocab) -> "Sequence":
        toks = tuple(tokens)
        return cls(tokens=toks, text=vocab.decode(toks))


@dataclass(frozen=True)
class TokenStep:
    """One committed token choice inside a sequence draw.

    ``logp_base`` is the untilted model log-probability over the full
    vocabulary; ``logq`` is the log-probability under the tilted proposal that
    the token was actually drawn from; ``penalty`` is the aggregated similarity
    that entered the tilt; ``lam`` is the tilt strength in force at this step.
    ``step``/``position`` are only set for denoising fills.
    """

    token: int
    logp_base: float
    logq: float
    penalty: float
    lam: float
    step: int | None = None
    position: int | None = None


@dataclass(frozen=True)
class SequenceSample:
    """A drawn sequence together with its pathwise proposal accounting."""

    sequence: Sequence
    steps: tuple[TokenStep, ...]
    origin: Origin
    truncated: bool = False

    @property
    def logp(self) -> float:
        return float(sum(s.logp_base for s in self.steps))

    @property
    def logq(self) -> float:
        return float(sum(s.logq for s in self.steps))

    @property
    def log_ratio(self) -> float:
        return self.logp - self.logq

    @property
    def text(self) -> str:
        return self.sequence.text


@dataclass(frozen=True)
class SamplePair:
    """Two sequences drawn as a chain (second conditioned on the first)."""

    first: SequenceSample
    second: SequenceSample

    @property
    def logp_joint(self) -> float:
        return self.first.logp + self.second.logp

    @property
    def logq_joint(self) -> float:
        return self.first.logq + self.second.logq

    @property
    def log_ratio(self) -> float:
        return self.logp_joint - self.logq_joint


def normalize_weights(log_ratios: Iterable[float]) -> np.ndarray:
    """Self-normalize importance log-ratios into weights summing to one.

    Works entirely in log space, so ratios spanning hundreds of nats are fine.

    :param log_ratios: per-sample ``log p - log q`` values, all finite.
    :return: array of normalized weights, ``sum == 1`` within 1e-12.
    """
    lr = np.asarray(list(log_ratios), dtype=np.float64)
    if lr.size == 0:
        raise ValueError("empty sample set")
    if not np.all(np.isfinite(lr)):
        raise ValueError("non-finite log ratio")
    return np.exp(lr - logsumexp(lr))


def effective_sample_size(normalized_weights: Iterable[float]) -> float:
    """Kong's effective sample size ``1 / sum(w_i^2)`` of normalized weights."""
    w = np.asarray(list(normalized_weights), dtype=np.float64)
    if w.size == 0:
        raise ValueError("empty sample set")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ValueError("weights are not normalized")
    return float(1.0 / np.sum(w * w))


@dataclass
class SampleSet:
    """An ordered collection of draws with their importance weights."""

    samples: list  # list[SequenceSample] or list[SamplePair]

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def log_ratios(self) -> np.ndarray:
        return np.array([s.log_ratio for s in self.samples], dtype=np.float64)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_ratios)

    @property
    def normalized_weights(self) -> np.ndarray:
        return normalize_weights(self.log_ratios)

    @property
    def ess(self) -> float:
        return effective_sample_size(self.normalized_weights)

    def texts(self) -> list[str]:
        return [s.text for s in self.samples]


@dataclass
class EstimateReport:
    """Everything the estimator stage produces for one prompt."""

    prompt_id: str
    n: int
    ess: float
    n_clusters: int
    se: float | None = None
    se_cv: float | None = None
    mi: float | None = None
    mi_cv: float | None = None
    alpha_se: float | None = None
    alpha_mi: float | None = None
    stopped_early: bool = False
    stop_n: int | None = None
    history: list[float] = field(default_factory=list)
    cluster_sizes: list[int] = field(default_factory=list)
    answer: str | None = None

    def __post_init__(self) -> None:
        if not 0 < self.ess <= self.n + 1e-9:
            raise ValueError(f"ess {self.ess} outside (0, n={self.n}]")
        if self.se is not None and self.n_clusters > 0:
            if self.se > math.log(self.n_clusters) + 1e-9:
                raise ValueError("entropy exceeds log of cluster count")

    def to_record(self) -> dict:
        rec = {"schema": SCHEMA_VERSION, "kind": "report"}
        rec.update(self.__dict__)
        return rec

    @classmethod
    def from_record(cls, record: dict) -> "EstimateReport":
        fields = {k: v for k, v in record.items() if k not in ("schema", "kind")}
        return cls(**fields)


def sample_to_record(sample: SequenceSample, prompt_id: str, index: int) -> dict:
    steps = []
    for s in sample.steps:
        step = {
            "token": s.token,
            "logp_base": s.logp_base,
            "logq": s.logq,
            "penalty": s.penalty,
            "lambda": s.lam,
        }
        if s.step is not None:
            step["step"] = s.step
            step["position"] = s.position
        steps.append(step)
    return {
        "schema": SCHEMA_VERSION,
        "kind": "sample",
        "prompt_id": prompt_id,
        "index": index,
        "origin": sample.origin.value,
        "tokens": list(sample.sequence.tokens),
        "text": sample.sequence.text,
        "truncated": sample.truncated,
        "logp": sample.logp,
        "logq": sample.logq,
        "steps": steps,
    }


def sample_from_record(record: dict) -> SequenceSample:
    steps = tuple(
        TokenStep(
            token=s["token"],
            logp_base=s["logp_base"],
            logq=s["logq"],
            penalty=s["penalty"],
            lam=s["lambda"],
            step=s.get("step"),
            position=s.get("position"),
        )
        for s in record["steps"]
    )
    return SequenceSample(
        sequence=Sequence(tokens=tuple(record["tokens"]), text=record["text"]),
        steps=steps,
        origin=Origin(record["origin"]),
        truncated=record.get("truncated", False),
    )


def write_records(path: str, records: Iterable[dict]) -> None:
    """Write line-delimited records with sorted keys (byte-stable output)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def read_records(path: str, expected_kind: str | None = None) -> Iterator[tuple[dict, int]]:
    """Yield ``(record, byte_offset)`` pairs from a line-delimited record file.

    Raises :class:`TraceError` (with the byte offset of the offending line) on
    malformed JSON, a missing/foreign schema tag, or an unexpected kind.
    """
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("utf-8", errors="replace").strip()
            if line:
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise TraceError(path, offset, f"invalid JSON ({exc.msg})") from exc
                if not isinstance(rec, dict) or rec.get("schema") != SCHEMA_VERSION:
                    raise TraceError(path, offset, f"missing or unsupported schema tag")
                if expected_kind is not None and rec.get("kind") != expected_kind:
                    raise TraceError(path, offset, f"expected {expected_kind!r} record")
                yield rec, offset
            offset += len(raw)
