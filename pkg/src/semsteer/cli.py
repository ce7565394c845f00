"""Command-line front end.

Subcommands cover the full workflow: ``sample`` writes weighted trace files,
``estimate`` turns traces into per-prompt reports, ``simulate`` runs seeded
replication studies on synthetic worlds, ``augment`` expands NLI corpora with
partial-text variants, ``evaluate`` scores reports against references, and
``report`` flattens report files into plot-ready CSV.

Configuration comes from a JSON file with an explicit schema tag; flags fill
in anything the file omits, and on conflict the file wins.  Runs are seeded
and single-threaded per prompt, so identical invocations produce
byte-identical outputs.

Exit codes: 2 for configuration problems, 3 for backend failures, 4 for a
corrupt trace (the message names the file and byte offset).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import augment as augment_mod
from .clustering import (
    ClusterConfig,
    ClusterMode,
    GreedyClusterer,
    cluster_mi,
    cluster_se,
    marginal_cluster_index,
    pair_text,
    prompt_text,
)
from .domain import (
    Origin,
    ProtocolError,
    SCHEMA_VERSION,
    SamplePair,
    SampleSet,
    TraceError,
    TransportError,
    letter_vocab,
    read_records,
    sample_from_record,
    sample_to_record,
    write_records,
)
from .estimators import (
    SequenceLambdaConfig,
    StoppingConfig,
    mi_report,
    run_online,
    se_report,
)
from .metrics import (
    MI_CORRECTNESS_THRESHOLD,
    SE_CORRECTNESS_THRESHOLD,
    auroc,
    rouge_l_f1,
    spearman_rho,
)
from .models import (
    PairedWorld,
    RemoteArmModel,
    WorldSpec,
    copy_pair_world,
    exact_pair_surprisal_mean,
    exact_sequence_surprisal_mean,
    fixed_length_arm_world,
    independent_pair_world,
    random_arm_world,
    random_mdm_world,
)
from .sampler_arm import ArmSamplerConfig, sample_pair_set, sample_sequence, sample_set
from .sampler_mdm import MdmSamplerConfig, sample_sequence_mdm, sample_set_mdm
from .similarity import (
    Aggregation,
    OracleScorer,
    PartialMarking,
    RemoteEntailmentScorer,
    SteeringPool,
)

logger = logging.getLogger(__name__)

RUN_SCHEMA = "semsteer-run/1"
STUDY_SCHEMA = "semsteer-study/1"

LOGITS_URL_ENV = "SEMSTEER_LOGITS_URL"
NLI_URL_ENV = "SEMSTEER_NLI_URL"

# Default prompt templates; `context` may be empty and is stripped away.
SE_PROMPT_TEMPLATE = "{context} Answer in one sentence. Q: {question} A:"
MI_SECOND_PROMPT_TEMPLATE = (
    "{context} Consider the following question. Q: {question}\n"
    "One answer to the question Q is {first_answer}\n"
    "Answer in one sentence. Q: {question} A:"
)

EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_TRACE = 4


class ConfigError(ValueError):
    pass


def render_prompt(template: str, **fields: str) -> str:
    try:
        return template.format(**{k: v or "" for k, v in fields.items()}).strip()
    except (KeyError, IndexError) as exc:
        raise ConfigError(f"prompt template references unknown field {exc}") from exc


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------


def _load_json(path: str, expected_schema: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict) or cfg.get("schema") != expected_schema:
        raise ConfigError(f"config {path} must carry schema tag {expected_schema!r}")
    return cfg


def build_world(spec: dict) -> WorldSpec | PairedWorld:
    """Instantiate a synthetic world from its config stanza."""
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("world stanza needs a 'name'")
    name = spec["name"]
    params = dict(spec.get("params", {}))
    try:
        if name == "random_arm":
            return random_arm_world(**params)
        if name == "random_mdm":
            return random_mdm_world(**params)
        if name == "fixed_length_arm":
            conditionals = [np.asarray(row, dtype=np.float64) for row in params.pop("conditionals")]
            return fixed_length_arm_world(conditionals, **params)
        if name == "pair_independent":
            return independent_pair_world(build_world(params["base"]))
        if name == "pair_copy":
            return copy_pair_world(build_world(params["base"]))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"world {name!r}: {exc}") from exc
    raise ConfigError(f"unknown world {name!r}")


def _resolve_endpoint(stanza: dict, env_name: str) -> str:
    endpoint = stanza.get("endpoint") or os.environ.get(stanza.get("endpoint_env", env_name), "")
    if not endpoint:
        raise ConfigError(
            f"remote backend needs 'endpoint' or ${stanza.get('endpoint_env', env_name)}"
        )
    return endpoint


def build_scorer(cfg: dict, world: WorldSpec | PairedWorld | None):
    stanza = cfg.get("scorer", {"type": "oracle"})
    kind = stanza.get("type", "oracle")
    if kind == "oracle":
        if world is None:
            raise ConfigError("oracle scorer requires a synthetic world")
        noise = float(stanza.get("noise", 0.0))
        if isinstance(world, PairedWorld):
            return OracleScorer.for_pairs(world, noise=noise)
        return OracleScorer(world, noise=noise)
    if kind == "remote":
        return RemoteEntailmentScorer(
            _resolve_endpoint(stanza, NLI_URL_ENV),
            marking=PartialMarking(stanza.get("marking", "none")),
            max_batch=int(stanza.get("max_batch", 256)),
            timeout=float(stanza.get("timeout", 30.0)),
            retries=int(stanza.get("retries", 3)),
        )
    raise ConfigError(f"unknown scorer type {kind!r}")


def build_backend(cfg: dict) -> tuple[object, WorldSpec | PairedWorld | None]:
    """Returns ``(model_or_pair_world, world_or_None)`` for the configured backend."""
    stanza = cfg.get("backend")
    if not isinstance(stanza, dict):
        raise ConfigError("config needs a 'backend' stanza")
    kind = stanza.get("type")
    if kind == "synthetic":
        world = build_world(stanza.get("world", {}))
        model = world if isinstance(world, PairedWorld) else world.model
        return model, world
    if kind == "remote":
        vocab = letter_vocab(int(stanza.get("vocab_size", 16)))
        model = RemoteArmModel(
            _resolve_endpoint(stanza, LOGITS_URL_ENV),
            vocab,
            top_k=int(stanza.get("top_k", vocab.n_content + 1)),
            timeout=float(stanza.get("timeout", 30.0)),
            retries=int(stanza.get("retries", 3)),
        )
        return model, None
    raise ConfigError(f"unknown backend type {kind!r}")


def build_sampler_config(cfg: dict, paradigm: str) -> ArmSamplerConfig | MdmSamplerConfig:
    stanza = dict(cfg.get("sampler", {}))
    if "aggregation" in stanza:
        stanza["aggregation"] = Aggregation(stanza["aggregation"])
    try:
        if paradigm == "mdm":
            return MdmSamplerConfig(**stanza)
        stanza.setdefault("max_tokens", 64)
        return ArmSamplerConfig(**stanza)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sampler stanza: {exc}") from exc


def build_cluster_config(cfg: dict) -> ClusterConfig:
    stanza = dict(cfg.get("clustering", {}))
    if "mode" in stanza:
        stanza["mode"] = ClusterMode(stanza["mode"])
    try:
        return ClusterConfig(**stanza)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"clustering stanza: {exc}") from exc


def build_stopping(cfg: dict) -> StoppingConfig | None:
    stanza = cfg.get("stopping")
    if stanza is None:
        return None
    try:
        return StoppingConfig(**stanza)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"stopping stanza: {exc}") from exc


def build_seq_lambda(cfg: dict) -> SequenceLambdaConfig | None:
    stanza = cfg.get("seq_lambda")
    if stanza is None:
        return None
    try:
        return SequenceLambdaConfig(**stanza)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seq_lambda stanza: {exc}") from exc


def _default_n(cfg: dict) -> int:
    task = cfg.get("task", "se")
    return int(cfg.get("n", 16 if task == "se" else 8))


def _prompt_entries(cfg: dict) -> list[dict]:
    prompts = cfg.get("prompts", [{"id": "p0"}])
    if not isinstance(prompts, list) or not prompts:
        raise ConfigError("'prompts' must be a non-empty list")
    out = []
    for i, entry in enumerate(prompts):
        if not isinstance(entry, dict) or "id" not in entry:
            raise ConfigError(f"prompt entry {i} needs an 'id'")
        out.append(entry)
    return out


def _prompt_rng(seed: int, prompt_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, prompt_index)))


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def pair_to_record(pair: SamplePair, prompt_id: str, index: int) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "kind": "pair_sample",
        "prompt_id": prompt_id,
        "index": index,
        "first": sample_to_record(pair.first, prompt_id, index),
        "second": sample_to_record(pair.second, prompt_id, index),
    }


def pair_from_record(record: dict) -> SamplePair:
    return SamplePair(
        first=sample_from_record(record["first"]),
        second=sample_from_record(record["second"]),
    )


def _sample_one_prompt(cfg: dict, model, world, scorer, prompt: dict, prompt_index: int,
                       seed: int, n: int) -> list[dict]:
    rng = _prompt_rng(seed, prompt_index)
    task = cfg.get("task", "se")
    paradigm = cfg.get("paradigm", "arm")
    sampler_cfg = build_sampler_config(cfg, paradigm)
    if task == "mi":
        if not isinstance(world, PairedWorld):
            raise ConfigError("task 'mi' requires a paired synthetic world")
        pairs = sample_pair_set(world, scorer, sampler_cfg, n, rng)
        return [pair_to_record(p, prompt["id"], i) for i, p in enumerate(pairs.samples)]
    if paradigm == "mdm":
        drawn = sample_set_mdm(model, scorer, sampler_cfg, n, rng)
    else:
        drawn = sample_set(model, scorer, sampler_cfg, n, rng)
    return [sample_to_record(s, prompt["id"], i) for i, s in enumerate(drawn.samples)]


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = _load_json(args.config, RUN_SCHEMA)
    model, world = build_backend(cfg)
    scorer = build_scorer(cfg, world)
    prompts = _prompt_entries(cfg)
    n = _default_n(cfg)
    workers = int(cfg.get("workers", args.workers))

    def work(item: tuple[int, dict]) -> list[dict]:
        index, prompt = item
        return _sample_one_prompt(cfg, model, world, scorer, prompt, index, args.seed, n)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(work, enumerate(prompts)))
    else:
        chunks = [work(item) for item in enumerate(prompts)]
    records = [rec for chunk in chunks for rec in chunk]
    write_records(args.out, records)
    logger.info("wrote %d sample records to %s", len(records), args.out)
    return 0


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def _group_traces(path: str) -> tuple[dict[str, list], str]:
    groups: dict[str, list] = {}
    kind_seen = ""
    for record, offset in read_records(path):
        kind = record.get("kind")
        if kind not in ("sample", "pair_sample"):
            raise TraceError(path, offset, f"unexpected record kind {kind!r}")
        kind_seen = kind
        try:
            parsed = pair_from_record(record) if kind == "pair_sample" else sample_from_record(record)
            prompt_id = record["prompt_id"]
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceError(path, offset, f"malformed sample record: {exc!r}") from exc
        groups.setdefault(prompt_id, []).append(parsed)
    if not groups:
        raise TraceError(path, 0, "no sample records found")
    return groups, kind_seen


def _cv_reference(cfg: dict, world) -> float | None:
    mode = cfg.get("estimator", {}).get("cv_reference", "exact")
    if mode == "none" or world is None:
        return None
    if mode != "exact":
        raise ConfigError(f"unknown cv_reference {mode!r}")
    if isinstance(world, PairedWorld):
        return exact_pair_surprisal_mean(world)
    return exact_sequence_surprisal_mean(world)


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = _load_json(args.config, RUN_SCHEMA)
    _model, world = build_backend(cfg)
    scorer = build_scorer(cfg, world)
    cluster_cfg = build_cluster_config(cfg)
    stop_cfg = build_stopping(cfg)
    mu_x = _cv_reference(cfg, world)
    groups, kind = _group_traces(args.traces)
    prompts = {p["id"]: p for p in _prompt_entries(cfg)}
    reports = []
    for prompt_id, samples in groups.items():
        sset = SampleSet(samples)
        prompt = prompts.get(prompt_id, {})
        wants_prompt = getattr(scorer, "understands_prompts", True) and prompt.get("question")
        prompt_body = render_prompt(
            cfg.get("prompt_template", SE_PROMPT_TEMPLATE),
            context=prompt.get("context", ""),
            question=prompt.get("question", ""),
        ) if wants_prompt else ""
        if kind == "pair_sample":
            clustering = cluster_mi(samples, scorer, cluster_cfg, prompt=prompt_body)
            fmap = marginal_cluster_index(clustering, samples, "first", scorer, cluster_cfg, prompt=prompt_body)
            smap = marginal_cluster_index(clustering, samples, "second", scorer, cluster_cfg, prompt=prompt_body)
            report = mi_report(prompt_id, sset, clustering, fmap, smap, mu_x=mu_x)
        else:
            clustering = cluster_se(sset.texts(), scorer, cluster_cfg, prompt=prompt_body)
            report = se_report(prompt_id, sset, clustering, mu_x=mu_x, stop_cfg=stop_cfg)
        reports.append(report.to_record())
    write_records(args.out, reports)
    logger.info("wrote %d reports to %s", len(reports), args.out)
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _lambda_label(setting) -> str:
    return "adaptive" if setting == "adaptive" else f"{float(setting):g}"


def _one_replication(study: dict, world, scorer, lam_setting, rep: int, seed: int,
                     lam_index: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence((seed, lam_index, rep)))
    paradigm = study.get("paradigm", "arm")
    sampler_cfg = build_sampler_config(study, paradigm)
    if lam_setting != "adaptive":
        fields = sampler_cfg.__dict__ | {"lambda0": float(lam_setting), "eta_tok": 0.0}
        sampler_cfg = type(sampler_cfg)(**fields)
    cluster_cfg = build_cluster_config(study)
    stop_cfg = build_stopping(study)
    seq_cfg = build_seq_lambda(study)
    n = _default_n(study)
    mu_x = _cv_reference(study, world)

    if paradigm == "mdm":
        marking = PartialMarking.MASK_INLINE

        def draw(pool: SteeringPool, lambda0: float):
            fields = sampler_cfg.__dict__ | {"lambda0": lambda0}
            return sample_sequence_mdm(world.model, scorer, pool, type(sampler_cfg)(**fields), rng)

    else:
        marking = PartialMarking.TRUNC_SUFFIX

        def draw(pool: SteeringPool, lambda0: float):
            fields = sampler_cfg.__dict__ | {"lambda0": lambda0}
            return sample_sequence(world.model, scorer, pool, type(sampler_cfg)(**fields), rng)

    run = run_online(
        draw,
        SteeringPool(scorer, sampler_cfg.aggregation, marking),
        GreedyClusterer(scorer, cluster_cfg),
        n,
        lambda0=sampler_cfg.lambda0,
        stop=stop_cfg,
        seq_adapt=seq_cfg,
    )
    report = se_report(
        "sim", run.sample_set, run.clustering, mu_x=mu_x,
        history=run.history, ess_ratios=run.ess_ratios,
        stopped_early=run.stopped_early, stop_n=run.stop_n,
    )
    return {
        "lambda": _lambda_label(lam_setting),
        "n": run.sample_set.n,
        "seed": rep,
        "se": report.se,
        "se_cv": report.se_cv,
        "alpha": report.alpha_se,
        "ess": report.ess,
        "ess_ratio": report.ess / run.sample_set.n,
        "n_clusters": report.n_clusters,
        "stopped_early": report.stopped_early,
    }


def cmd_simulate(args: argparse.Namespace) -> int:
    study = _load_json(args.study, STUDY_SCHEMA)
    world = build_world(study.get("world", {}))
    if isinstance(world, PairedWorld):
        raise ConfigError("simulate currently studies single-answer (entropy) runs")
    scorer = build_scorer(study, world)
    lambdas = study.get("lambdas", ["adaptive"])
    reps = int(study.get("replications", 20))
    rows = []
    for li, lam in enumerate(lambdas):
        for rep in range(reps):
            rows.append(_one_replication(study, world, scorer, lam, rep, args.seed, li))
    fieldnames = list(rows[0].keys())
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    summary = {}
    for li, lam in enumerate(lambdas):
        label = _lambda_label(lam)
        sub = [r for r in rows if r["lambda"] == label]
        var_se = statistics.pvariance([r["se"] for r in sub]) if len(sub) > 1 else 0.0
        var_cv = statistics.pvariance([r["se_cv"] for r in sub]) if len(sub) > 1 else 0.0
        summary[label] = {
            "replications": len(sub),
            "var_se": var_se,
            "var_se_cv": var_cv,
            "var_ratio": (var_cv / var_se) if var_se > 0 else None,
            "median_clusters": statistics.median(r["n_clusters"] for r in sub),
            "median_ess_ratio": statistics.median(r["ess_ratio"] for r in sub),
            "mean_ess_ratio": statistics.fmean(r["ess_ratio"] for r in sub),
        }
    summary_path = str(Path(args.out).with_suffix("")) + ".summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("wrote %d rows to %s and summary to %s", len(rows), args.out, summary_path)
    return 0


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------


def _read_pairs(path: str) -> list[augment_mod.NliPair]:
    pairs = []
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("utf-8", errors="replace").strip()
            if line:
                try:
                    rec = json.loads(line)
                    pairs.append(augment_mod.pair_from_record(rec))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise TraceError(path, offset, f"bad NLI pair record: {exc}") from exc
            offset += len(raw)
    if not pairs:
        raise TraceError(path, 0, "no NLI pairs found")
    return pairs


def cmd_augment(args: argparse.Namespace) -> int:
    pairs = _read_pairs(args.input)
    records: list[dict] = []
    for index, pair in enumerate(pairs):
        if args.mode == "trunc":
            marker = args.marker or "[TRUNC]"
            records.extend(augment_mod.unroll_truncations(pair, marker))
        else:
            marker = args.marker or "[MASK]"
            records.extend(
                augment_mod.mask_variants(
                    pair, k=args.k, marker=marker, seed=args.seed, record_index=index
                )
            )
    write_records(args.out, records)
    logger.info("wrote %d augmented records to %s", len(records), args.out)
    return 0


# ---------------------------------------------------------------------------
# evaluate / report
# ---------------------------------------------------------------------------


def _read_reports(path: str) -> list[dict]:
    return [rec for rec, _ in read_records(path, expected_kind="report")]


def cmd_evaluate(args: argparse.Namespace) -> int:
    reports = _read_reports(args.reports)
    references: dict[str, list[str]] = {}
    offset = 0
    with open(args.references, "rb") as fh:
        for raw in fh:
            line = raw.decode("utf-8", errors="replace").strip()
            if line:
                try:
                    rec = json.loads(line)
                    references[rec["prompt_id"]] = list(rec["references"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise TraceError(args.references, offset, f"bad reference record: {exc}") from exc
            offset += len(raw)
    metric = args.metric
    threshold = args.threshold
    if threshold is None:
        threshold = MI_CORRECTNESS_THRESHOLD if metric.startswith("mi") else SE_CORRECTNESS_THRESHOLD
    rows = []
    for rec in reports:
        prompt_id = rec["prompt_id"]
        if prompt_id not in references:
            raise ConfigError(f"no references for prompt {prompt_id!r}")
        if rec.get(metric) is None:
            raise ConfigError(f"report for {prompt_id!r} lacks metric {metric!r}")
        if not rec.get("answer"):
            raise ConfigError(f"report for {prompt_id!r} carries no answer text")
        overlap = rouge_l_f1(rec["answer"], references[prompt_id])
        rows.append({"uncertainty": float(rec[metric]), "overlap": overlap,
                     "correct": overlap >= threshold})
    out = {
        "metric": metric,
        "threshold": threshold,
        "n_prompts": len(rows),
        "accuracy": sum(r["correct"] for r in rows) / len(rows),
    }
    try:
        out["auroc"] = auroc(
            [r["uncertainty"] for r in rows], [not r["correct"] for r in rows]
        )
    except ValueError as exc:
        logger.warning("AUROC unavailable: %s", exc)
        out["auroc"] = None
    try:
        out["spearman"] = spearman_rho(
            [-r["overlap"] for r in rows], [r["uncertainty"] for r in rows]
        )
    except ValueError as exc:
        logger.warning("Spearman unavailable: %s", exc)
        out["spearman"] = None
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    reports = _read_reports(args.reports)
    fields = ["prompt_id", "n", "se", "se_cv", "mi", "mi_cv", "alpha_se", "alpha_mi",
              "ess", "ess_ratio", "n_clusters", "stopped_early", "stop_n"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for rec in reports:
            row = {k: rec.get(k) for k in fields}
            row["ess_ratio"] = rec["ess"] / rec["n"] if rec.get("n") else None
            writer.writerow(row)
    histogram: dict[int, int] = {}
    for rec in reports:
        histogram[rec["n_clusters"]] = histogram.get(rec["n_clusters"], 0) + 1
    for count in sorted(histogram):
        print(f"clusters={count}: {histogram[count]} prompts")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semsteer",
        description="Diversity-steered sampling and semantic-uncertainty estimation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw weighted samples into a trace file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="turn a trace file into per-prompt reports")
    p.add_argument("--traces", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="seeded replication study on a synthetic world")
    p.add_argument("--study", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("augment", help="expand NLI pairs with partial-text variants")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=["trunc", "mask"], required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--marker", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="score reports against reference answers")
    p.add_argument("--reports", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--metric", default="se",
                   choices=["se", "se_cv", "mi", "mi_cv"])
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="flatten report files into plot-ready CSV")
    p.add_argument("--reports", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TransportError, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except TraceError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE


if __name__ == "__main__":
    sys.exit(main())
