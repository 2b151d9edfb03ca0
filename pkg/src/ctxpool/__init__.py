"""Distribution-conditioned attention pooling for variable-size embedding
templates.

A template is an unordered set of fixed-dimension embeddings that belongs
to one subject and one capture distribution (probe or gallery). The model
summarizes the set, conditions a context vector on that summary, scores
every member against the context, and pools the members by those scores
into a single vector. Training uses a supervised contrastive objective over
pooled probe/gallery pairs.
"""

__version__ = "0.1.0"

from .errors import (
    BatchError,
    CtxpoolError,
    DatasetError,
    DegenerateInputError,
    DimensionError,
    FormatError,
    GraphError,
    IntegrityError,
    NonFiniteError,
    ParameterError,
    SchemaError,
    TrainingError,
    UsageError,
    VersionError,
)
from .templates import Dataset, Distribution, Embedding, Template, validate
from .model import ModelConfig, ModelParams
from .summary import SUMMARY_BLOCKS, TemplateStats, compute_stats
from .pooling import AggregationResult, ForwardPass, aggregate_forward, aggregate_template
from .loss import CrossBatchMemory, supcon, supcon_plan
from .synthetic import SynthConfig, generate
from .storage import read_checkpoint, read_dataset, write_checkpoint, write_dataset
from .training import TrainConfig, batch_objective, fit
from .evaluation import (
    EvalReport,
    ablation_suite,
    evaluate_gap,
    evaluate_model,
    weight_quality,
)
from .numerics import Node, backward, fd_check

__all__ = [
    "AggregationResult",
    "BatchError",
    "CrossBatchMemory",
    "CtxpoolError",
    "Dataset",
    "DatasetError",
    "DegenerateInputError",
    "DimensionError",
    "Distribution",
    "Embedding",
    "EvalReport",
    "FormatError",
    "ForwardPass",
    "GraphError",
    "IntegrityError",
    "ModelConfig",
    "ModelParams",
    "Node",
    "NonFiniteError",
    "ParameterError",
    "SchemaError",
    "SUMMARY_BLOCKS",
    "SynthConfig",
    "Template",
    "TemplateStats",
    "TrainConfig",
    "TrainingError",
    "UsageError",
    "VersionError",
    "ablation_suite",
    "aggregate_forward",
    "aggregate_template",
    "backward",
    "batch_objective",
    "compute_stats",
    "evaluate_gap",
    "evaluate_model",
    "fd_check",
    "fit",
    "generate",
    "read_checkpoint",
    "read_dataset",
    "supcon",
    "supcon_plan",
    "validate",
    "weight_quality",
    "write_checkpoint",
    "write_dataset",
]
