"""Diversity-steered sampling with debiased semantic-uncertainty estimates.

The package draws answer samples from autoregressive or masked-diffusion
sequence models while tilting each token-level proposal away from answers
already in the pool, then undoes the induced bias with self-normalized
importance weights.  On top of the weighted samples it estimates semantic
entropy and a mutual-information signal over meaning clusters, with optional
control variates and online stopping.
"""

from .augment import (
    NliPair,
    mask_variants,
    pair_from_record,
    sample_truncation,
    unroll_truncations,
)
from .clustering import (
    ClusterConfig,
    ClusterMode,
    Clustering,
    GreedyClusterer,
    cluster_mi,
    cluster_se,
    marginal_cluster_index,
)
from .domain import (
    MASK_TEXT,
    SCHEMA_VERSION,
    TRUNC_TEXT,
    EstimateReport,
    Origin,
    ProtocolError,
    SamplePair,
    SampleSet,
    Sequence,
    SequenceSample,
    TokenStep,
    TraceError,
    TransportError,
    Vocab,
    effective_sample_size,
    letter_vocab,
    normalize_weights,
    read_records,
    write_records,
)
from .estimators import (
    SequenceLambdaConfig,
    StoppingConfig,
    control_variate_adjust,
    mi_report,
    mi_with_cv,
    run_online,
    se_report,
    se_with_cv,
    semantic_entropy,
    should_stop,
)
from .models import (
    PairedWorld,
    RemoteArmModel,
    TabularArmModel,
    TabularMdmModel,
    WorldSpec,
    copy_pair_world,
    enumerate_distribution,
    exact_mutual_information,
    exact_semantic_entropy,
    fixed_length_arm_world,
    independent_pair_world,
    random_arm_world,
    random_mdm_world,
    remote_logits,
)
from .metrics import auroc, is_correct, rouge_l_f1, spearman_rho
from .sampler_arm import ArmSamplerConfig, sample_pair_set, sample_sequence, sample_set
from .sampler_mdm import MdmSamplerConfig, sample_sequence_mdm, sample_set_mdm
from .similarity import (
    Aggregation,
    OracleScorer,
    PartialMarking,
    RemoteEntailmentScorer,
    SimilarityScorer,
    SteeringPool,
    bidirectional_score,
    remote_entailment,
)

__version__ = "0.1.0"

__all__ = [
    "Aggregation",
    "ArmSamplerConfig",
    "ClusterConfig",
    "ClusterMode",
    "Clustering",
    "EstimateReport",
    "GreedyClusterer",
    "MASK_TEXT",
    "MdmSamplerConfig",
    "NliPair",
    "OracleScorer",
    "Origin",
    "PairedWorld",
    "PartialMarking",
    "ProtocolError",
    "RemoteArmModel",
    "RemoteEntailmentScorer",
    "SCHEMA_VERSION",
    "SamplePair",
    "SampleSet",
    "Sequence",
    "SequenceLambdaConfig",
    "SequenceSample",
    "SimilarityScorer",
    "SteeringPool",
    "StoppingConfig",
    "TRUNC_TEXT",
    "TabularArmModel",
    "TabularMdmModel",
    "TokenStep",
    "TraceError",
    "TransportError",
    "Vocab",
    "WorldSpec",
    "auroc",
    "bidirectional_score",
    "cluster_mi",
    "cluster_se",
    "control_variate_adjust",
    "copy_pair_world",
    "effective_sample_size",
    "enumerate_distribution",
    "exact_mutual_information",
    "exact_semantic_entropy",
    "fixed_length_arm_world",
    "independent_pair_world",
    "is_correct",
    "letter_vocab",
    "marginal_cluster_index",
    "mask_variants",
    "mi_report",
    "mi_with_cv",
    "normalize_weights",
    "pair_from_record",
    "random_arm_world",
    "random_mdm_world",
    "read_records",
    "remote_entailment",
    "remote_logits",
    "rouge_l_f1",
    "run_online",
    "sample_pair_set",
    "sample_sequence",
    "sample_sequence_mdm",
    "sample_set",
    "sample_set_mdm",
    "sample_truncation",
    "se_report",
    "se_with_cv",
    "semantic_entropy",
    "should_stop",
    "spearman_rho",
    "unroll_truncations",
    "write_records",
]
