"""Downstream evaluation metrics: overlap-based correctness, AUROC, Spearman.

Texts are compared on lowercase whitespace tokens with trailing punctuation
stripped per token.  A candidate counts as correct when its best ROUGE-L F1
against the references reaches the threshold.
"""

from __future__ import annotations

import string
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

SE_CORRECTNESS_THRESHOLD = 0.3
MI_CORRECTNESS_THRESHOLD = 0.2


def _tokens(text: str) -> list[str]:
    out = []
    for raw in text.lower().split():
        tok = raw.rstrip(string.punctuation)
        if tok:
            out.append(tok)
    return out


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l_f1(candidate: str, references: Sequence[str]) -> float:
    """Best longest-common-subsequence F1 of the candidate over the references."""
    if not references:
        raise ValueError("at least one reference is required")
    cand = _tokens(candidate)
    if not cand:
        raise ValueError("candidate has no tokens after normalization")
    best = 0.0
    for reference in references:
        ref = _tokens(reference)
        if not ref:
            raise ValueError("empty reference after normalization")
        lcs = _lcs_length(cand, ref)
        if lcs == 0:
            continue
        precision = lcs / len(cand)
        recall = lcs / len(ref)
        best = max(best, 2.0 * precision * recall / (precision + recall))
    return best


def is_correct(candidate: str, references: Sequence[str], threshold: float) -> bool:
    return rouge_l_f1(candidate, references) >= threshold


def auroc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability a positive outranks a negative (ties count half).

    Computed from mid-ranks (the Mann-Whitney U form), so it is exact under
    ties.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels must align")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("degenerate labels: need both classes")
    ranks = rankdata(s)
    u = float(ranks[y].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def spearman_rho(a: Sequence[float], b: Sequence[float]) -> float:
    """Rank correlation: Pearson correlation of mid-ranks."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need two aligned vectors of length >= 3")
    rx = rankdata(x)
    ry = rankdata(y)
    if np.var(rx) == 0.0 or np.var(ry) == 0.0:
        raise ValueError("zero rank variance")
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    return float(np.sum(rx * ry) / np.sqrt(np.sum(rx * rx) * np.sum(ry * ry)))
