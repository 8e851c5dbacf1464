"""Latent-subclass probes over precomputed contextual-embedding features."""

from .data import (
    AnnotatedSentence,
    PositiveUnit,
    SamplingWarning,
    SpanTarget,
    TaskDataset,
    TaskFileError,
    load_corpus,
    load_task,
    sample_negative_pairs,
    sample_negative_spans,
    write_task,
)
from .embfile import (
    BundleIndex,
    EmbeddingBundle,
    EmbeddingFileError,
    load_embeddings,
    write_embeddings,
)
from .lsl import (
    BatchPosteriors,
    LatentPosterior,
    LslHead,
    Model,
    forward,
    forward_batch,
    init_model,
    loss_batch_entropy,
    loss_instance_entropy,
    loss_lsl,
    loss_total,
    mutual_information,
    run_model,
)
from .metrics import (
    Contingency,
    b_cubed,
    binary_accuracy,
    diversity,
    npmi_matrix,
    uncertainty,
)
from .probe import (
    FeatureBatch,
    ProbeParams,
    featurize,
    gather_features,
    init_probe_params,
    mix_layers,
    pool_span,
)
from .training import (
    RunArtifact,
    TrainConfig,
    TrainingDiverged,
    ablation_grid,
    select_consistent,
    select_hidden_size,
    train,
    tune_hidden_size,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSentence",
    "BatchPosteriors",
    "BundleIndex",
    "Contingency",
    "EmbeddingBundle",
    "EmbeddingFileError",
    "FeatureBatch",
    "LatentPosterior",
    "LslHead",
    "Model",
    "PositiveUnit",
    "ProbeParams",
    "RunArtifact",
    "SamplingWarning",
    "SpanTarget",
    "TaskDataset",
    "TaskFileError",
    "TrainConfig",
    "TrainingDiverged",
    "ablation_grid",
    "b_cubed",
    "binary_accuracy",
    "diversity",
    "featurize",
    "forward",
    "forward_batch",
    "gather_features",
    "init_model",
    "init_probe_params",
    "load_corpus",
    "load_embeddings",
    "load_task",
    "loss_batch_entropy",
    "loss_instance_entropy",
    "loss_lsl",
    "loss_total",
    "mix_layers",
    "mutual_information",
    "npmi_matrix",
    "pool_span",
    "run_model",
    "sample_negative_pairs",
    "sample_negative_spans",
    "select_consistent",
    "select_hidden_size",
    "train",
    "tune_hidden_size",
    "uncertainty",
    "write_embeddings",
    "write_task",
]
