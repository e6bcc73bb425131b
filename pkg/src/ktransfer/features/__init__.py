"""Feature engineering: schemas, rolling state, and extraction."""

from .families import (
    difficulty_bucket,
    lag_response_time_features,
    phi,
    ppe_feature,
    response_pattern,
    rpfa_features,
    smoothed_correctness,
    time_window_counts,
)
from .schema import (
    AGNOSTIC_FAMILIES,
    ALL_FAMILIES,
    PRESET_FAMILIES,
    SPECIFIC_FAMILIES,
    ExtractorConfig,
    FeatureBlock,
    FeatureSchema,
    HyperParams,
    SparseVector,
    build_schema,
    sparse_vector,
)
from .state import RollingState, update_state
from .extract import extract, extract_sequence, fresh_state

__all__ = [
    "AGNOSTIC_FAMILIES",
    "ALL_FAMILIES",
    "PRESET_FAMILIES",
    "SPECIFIC_FAMILIES",
    "ExtractorConfig",
    "FeatureBlock",
    "FeatureSchema",
    "HyperParams",
    "RollingState",
    "SparseVector",
    "build_schema",
    "difficulty_bucket",
    "extract",
    "extract_sequence",
    "fresh_state",
    "lag_response_time_features",
    "phi",
    "ppe_feature",
    "response_pattern",
    "rpfa_features",
    "smoothed_correctness",
    "sparse_vector",
    "time_window_counts",
    "update_state",
]
