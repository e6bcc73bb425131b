"""Transferable student performance modeling for intelligent tutoring systems.

Course-specific and course-agnostic knowledge-tracing models, naive transfer
to unseen courses, and inductive fine-tuning from small pilot cohorts under
an L2-to-prior regularized objective — verified at desk scale against a
built-in synthetic student simulator.
"""

__version__ = "0.1.0"

from .domain import CourseMeta, Dataset, Interaction, StudentHistory, validate_dataset
from .features import ExtractorConfig, FeatureSchema, HyperParams, SparseVector, build_schema
from .linmodel import PriorSpec, TrainConfig, WeightVector
from .transfer import (
    MODEL_ZOO,
    AgnosticModel,
    ModelSpec,
    TargetModel,
    apply_agnostic,
    embed_prior,
    get_spec,
    train_agnostic,
    train_scratch,
    tune_inductive,
)

__all__ = [
    "AgnosticModel",
    "CourseMeta",
    "Dataset",
    "ExtractorConfig",
    "FeatureSchema",
    "HyperParams",
    "Interaction",
    "MODEL_ZOO",
    "ModelSpec",
    "PriorSpec",
    "SparseVector",
    "StudentHistory",
    "TargetModel",
    "TrainConfig",
    "WeightVector",
    "__version__",
    "apply_agnostic",
    "build_schema",
    "embed_prior",
    "get_spec",
    "train_agnostic",
    "train_scratch",
    "tune_inductive",
    "validate_dataset",
]
