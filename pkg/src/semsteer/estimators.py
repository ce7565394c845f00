"""Weighted semantic-uncertainty estimators with control-variate adjustment.

Cluster probabilities are self-normalized importance-weighted counts; the
semantic entropy is their entropy, equivalently the weighted mean of the
per-sample cluster surprisals ``Y_i = -log p_hat(c(s_i))``.  The adjusted
estimator subtracts a regression on the sequence surprisal
``X_i = -log p(s_i)`` (for the pair estimator, ``X_i = log p(s1, s2)``):

    est_cv = est - alpha * (sum_i w_i X_i - mu_x)

with ``alpha`` the weighted least-squares coefficient of ``Y`` on ``X``.
When the reference mean ``mu_x`` of the control statistic is unknown the
weighted sample mean is used, which makes the correction vanish identically;
supplying the exact mean (enumerable worlds, or a pilot estimate) is what
buys the ``1 - rho^2`` variance reduction.

This module also owns the run-level plumbing: sequence-level tilt adaptation
driven by the variance of the running estimate, the plateau-plus-ESS early
stopping rule, and an online loop that interleaves drawing, incremental
clustering, and stopping.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence as Seq

import numpy as np

from .clustering import Clustering, GreedyClusterer
from .domain import EstimateReport, SampleSet, SequenceSample, normalize_weights
from .similarity import SteeringPool

logger = logging.getLogger(__name__)

ALPHA_DENOM_FLOOR = 1e-12


@dataclass
class StoppingConfig:
    """Stop once the last ``window`` running estimates move less than
    ``epsilon`` nats end to end and the ESS fraction is healthy."""

    window: int = 4
    epsilon: float = 0.02
    min_ess_ratio: float = 0.4

    def __post_init__(self) -> None:
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.epsilon < 0 or not 0.0 <= self.min_ess_ratio <= 1.0:
            raise ValueError("epsilon must be >= 0 and min_ess_ratio in [0, 1]")


@dataclass
class SequenceLambdaConfig:
    """Across-sequence tilt adaptation driven by the running-estimate variance."""

    eta_seq: float = 0.5
    v_target: float = 0.01


def cluster_probs(sample_set: SampleSet, clustering: Clustering) -> np.ndarray:
    """Importance-weighted cluster probabilities (sums to one)."""
    if len(clustering.assignment) != sample_set.n:
        raise ValueError("clustering does not cover the sample set")
    w = sample_set.normalized_weights
    probs = np.zeros(clustering.n_clusters)
    np.add.at(probs, clustering.assignment, w)
    return probs


def semantic_entropy(probs: Seq[float]) -> float:
    """Entropy in nats of a cluster-probability vector (``0 log 0 := 0``)."""
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("negative cluster probability")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def alpha_star(x: Seq[float], y: Seq[float], w_tilde: Seq[float]) -> float:
    """Weighted least-squares slope of ``y`` on ``x`` (0 when ``x`` is constant)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w_tilde, dtype=np.float64)
    if not (x.shape == y.shape == w.shape):
        raise ValueError("x, y, and weights must have matching shapes")
    xc = x - np.sum(w * x)
    yc = y - np.sum(w * y)
    denom = float(np.sum(w * xc * xc))
    if denom < ALPHA_DENOM_FLOOR:
        return 0.0
    return float(np.sum(w * xc * yc) / denom)


def control_variate_adjust(
    y: Seq[float], x: Seq[float], w_tilde: Seq[float], mu_x: float | None = None
) -> tuple[float, float, float]:
    """Return ``(estimate, adjusted_estimate, alpha)`` for weighted data.

    ``estimate`` is ``sum(w * y)``; the adjustment subtracts
    ``alpha * (sum(w * x) - mu_x)``.  With ``mu_x=None`` the weighted sample
    mean stands in and the adjustment is identically zero.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w_tilde, dtype=np.float64)
    est = float(np.sum(w * y))
    alpha = alpha_star(x, y, w)
    reference = float(np.sum(w * x)) if mu_x is None else mu_x
    adjusted = est - alpha * (float(np.sum(w * x)) - reference)
    return est, adjusted, alpha


@dataclass
class SeEstimate:
    se: float
    se_cv: float
    alpha: float
    probs: np.ndarray


def se_with_cv(
    sample_set: SampleSet, clustering: Clustering, mu_x: float | None = None
) -> SeEstimate:
    """Semantic entropy with the sequence-surprisal control variate."""
    w = sample_set.normalized_weights
    probs = cluster_probs(sample_set, clustering)
    y = -np.log(probs[clustering.assignment])
    x = np.array([-s.logp for s in sample_set.samples])
    se, se_cv, alpha = control_variate_adjust(y, x, w, mu_x)
    return SeEstimate(se=se, se_cv=se_cv, alpha=alpha, probs=probs)


@dataclass
class MiEstimate:
    mi: float
    mi_cv: float
    alpha: float
    probs: np.ndarray
    product_probs: np.ndarray


def mi_with_cv(
    sample_set: SampleSet,
    clustering: Clustering,
    first_map: dict[int, int],
    second_map: dict[int, int],
    mu_x: float | None = None,
) -> MiEstimate:
    """Cluster-level mutual information with the joint-surprisal control variate.

    The product-of-marginals mass of a joint cluster aggregates the joint
    masses through the two marginal index maps before multiplying.
    """
    w = sample_set.normalized_weights
    probs = cluster_probs(sample_set, clustering)
    k = clustering.n_clusters
    if set(first_map) != set(range(k)) or set(second_map) != set(range(k)):
        raise ValueError("marginal maps must cover every joint cluster")
    m1 = np.zeros(max(first_map.values()) + 1)
    m2 = np.zeros(max(second_map.values()) + 1)
    for c in range(k):
        m1[first_map[c]] += probs[c]
        m2[second_map[c]] += probs[c]
    product = np.array([m1[first_map[c]] * m2[second_map[c]] for c in range(k)])
    if np.any((probs > 0) & (product <= 0)):
        raise AssertionError("support violation: product marginal vanished on a live cluster")
    y = np.log(probs[clustering.assignment] / product[clustering.assignment])
    x = np.array([-p.logp_joint for p in sample_set.samples])
    mi, mi_cv, alpha = control_variate_adjust(y, x, w, mu_x)
    return MiEstimate(mi=mi, mi_cv=mi_cv, alpha=alpha, probs=probs, product_probs=product)


def update_lambda_sequence(
    lam: float, running_estimates: Seq[float], cfg: SequenceLambdaConfig
) -> float:
    """Across-sequence tilt update; needs two running estimates for a variance."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if len(running_estimates) < 2:
        return lam
    var = float(np.var(np.asarray(running_estimates, dtype=np.float64), ddof=1))
    return max(0.0, lam + cfg.eta_seq * (var - cfg.v_target))


def should_stop(history: Seq[float], ess_ratio: float, cfg: StoppingConfig) -> bool:
    """Plateau test on the running estimate, gated by an ESS floor."""
    if len(history) < cfg.window:
        return False
    recent = history[-cfg.window :]
    return (max(recent) - min(recent)) <= cfg.epsilon and ess_ratio >= cfg.min_ess_ratio


def running_entropy_history(
    log_ratios: Seq[float], assignment: Seq[int]
) -> tuple[list[float], list[float]]:
    """Running (entropy, ESS-ratio) after each prefix of a finished run.

    Matches what the online loop would have seen at each step, so the stopping
    rule can be evaluated retrospectively from a trace.
    """
    lr = np.asarray(log_ratios, dtype=np.float64)
    if lr.size != len(assignment):
        raise ValueError("log ratios and assignment must align")
    cluster_logw: list[float] = []
    history: list[float] = []
    ess_ratios: list[float] = []
    lse_w = -np.inf
    lse_w2 = -np.inf
    for i, cid in enumerate(assignment):
        if cid == len(cluster_logw):
            cluster_logw.append(-np.inf)
        elif cid > len(cluster_logw):
            raise ValueError("assignment ids must appear in founding order")
        cluster_logw[cid] = np.logaddexp(cluster_logw[cid], lr[i])
        lse_w = np.logaddexp(lse_w, lr[i])
        lse_w2 = np.logaddexp(lse_w2, 2.0 * lr[i])
        probs = np.exp(np.asarray(cluster_logw) - lse_w)
        history.append(semantic_entropy(probs))
        ess_ratios.append(float(math.exp(2.0 * lse_w - lse_w2)) / (i + 1))
    return history, ess_ratios


def retrospective_stop(
    history: Seq[float], ess_ratios: Seq[float], cfg: StoppingConfig
) -> int | None:
    """First sample count at which the online rule would have stopped."""
    for n in range(1, len(history) + 1):
        if should_stop(history[:n], ess_ratios[n - 1], cfg):
            return n
    return None


@dataclass
class OnlineRun:
    """What the interleaved draw/cluster/estimate loop produced."""

    sample_set: SampleSet
    clustering: Clustering
    history: list[float]
    ess_ratios: list[float]
    stopped_early: bool
    stop_n: int | None
    lambda0_final: float
    lambda0_trace: list[float] = field(default_factory=list)


def run_online(
    draw: Callable[[SteeringPool, float], SequenceSample],
    pool: SteeringPool,
    clusterer: GreedyClusterer,
    n_max: int,
    *,
    lambda0: float = 0.0,
    stop: StoppingConfig | None = None,
    seq_adapt: SequenceLambdaConfig | None = None,
    cluster_text: Callable[[str], str] = lambda text: text,
) -> OnlineRun:
    """Interleave drawing, clustering, and estimation; stop early if allowed.

    ``draw(pool, lambda0)`` must produce the next sample steered against the
    pool; this loop owns pool growth, incremental clustering (via
    ``cluster_text``, e.g. to prepend the prompt), the running-estimate
    history, and the sequence-level tilt schedule.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    samples: list[SequenceSample] = []
    history: list[float] = []
    ess_ratios: list[float] = []
    lambda0_trace: list[float] = []
    cluster_logw: list[float] = []
    lse_w = -np.inf
    lse_w2 = -np.inf
    stopped = False
    for i in range(n_max):
        lambda0_trace.append(lambda0)
        sample = draw(pool, lambda0)
        samples.append(sample)
        pool.add(sample.text)
        cid = clusterer.add(cluster_text(sample.text))
        if cid == len(cluster_logw):
            cluster_logw.append(-np.inf)
        lr = sample.log_ratio
        cluster_logw[cid] = np.logaddexp(cluster_logw[cid], lr)
        lse_w = np.logaddexp(lse_w, lr)
        lse_w2 = np.logaddexp(lse_w2, 2.0 * lr)
        probs = np.exp(np.asarray(cluster_logw) - lse_w)
        history.append(semantic_entropy(probs))
        ess_ratios.append(float(math.exp(2.0 * lse_w - lse_w2)) / (i + 1))
        if stop is not None and should_stop(history, ess_ratios[-1], stop):
            stopped = True
            break
        if seq_adapt is not None:
            lambda0 = update_lambda_sequence(lambda0, history, seq_adapt)
    return OnlineRun(
        sample_set=SampleSet(samples),
        clustering=clusterer.snapshot(),
        history=history,
        ess_ratios=ess_ratios,
        stopped_early=stopped,
        stop_n=len(samples) if stopped else None,
        lambda0_final=lambda0,
        lambda0_trace=lambda0_trace,
    )


def se_report(
    prompt_id: str,
    sample_set: SampleSet,
    clustering: Clustering,
    *,
    mu_x: float | None = None,
    stop_cfg: StoppingConfig | None = None,
    history: list[float] | None = None,
    ess_ratios: list[float] | None = None,
    stopped_early: bool = False,
    stop_n: int | None = None,
) -> EstimateReport:
    """Assemble the per-prompt report for a single-answer (entropy) run."""
    est = se_with_cv(sample_set, clustering, mu_x)
    if history is None or ess_ratios is None:
        history, ess_ratios = running_entropy_history(
            sample_set.log_ratios, clustering.assignment
        )
        if stop_cfg is not None:
            n = retrospective_stop(history, ess_ratios, stop_cfg)
            stopped_early, stop_n = n is not None, n
    w = sample_set.normalized_weights
    answer = sample_set.samples[int(np.argmax(w))].text
    return EstimateReport(
        prompt_id=prompt_id,
        n=sample_set.n,
        ess=sample_set.ess,
        n_clusters=clustering.n_clusters,
        se=est.se,
        se_cv=est.se_cv,
        alpha_se=est.alpha,
        stopped_early=stopped_early,
        stop_n=stop_n,
        history=[float(h) for h in history],
        cluster_sizes=clustering.sizes(),
        answer=answer,
    )


def mi_report(
    prompt_id: str,
    sample_set: SampleSet,
    clustering: Clustering,
    first_map: dict[int, int],
    second_map: dict[int, int],
    *,
    mu_x: float | None = None,
) -> EstimateReport:
    """Assemble the per-prompt report for an answer-pair (MI) run."""
    est = mi_with_cv(sample_set, clustering, first_map, second_map, mu_x)
    w = sample_set.normalized_weights
    top = sample_set.samples[int(np.argmax(w))]
    return EstimateReport(
        prompt_id=prompt_id,
        n=sample_set.n,
        ess=sample_set.ess,
        n_clusters=clustering.n_clusters,
        mi=est.mi,
        mi_cv=est.mi_cv,
        alpha_mi=est.alpha,
        cluster_sizes=clustering.sizes(),
        answer=top.first.text,
    )
