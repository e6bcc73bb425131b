"""Feature-space layout: named blocks, presets, and sparse vectors.

A schema is an ordered list of feature blocks laid out in a fixed canonical
order, agnostic families first. Two schemas built from the same config always
share the agnostic prefix byte for byte, which is what makes weights learned
on one course portable to another.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..domain import DEFAULT_CONTEXT_LABELS, CourseMeta
from ..errors import ConfigError, SchemaError
from .families import DIFFICULTY_BUCKETS


@dataclass(frozen=True)
class HyperParams:
    """Feature-formula constants (defaults follow the shipped presets)."""

    eta: float = 5.0
    pattern_len: int = 10
    rpfa_ghosts: int = 3
    rpfa_decay_failure: float = 0.8
    rpfa_decay_success: float = 0.8
    ppe_c: float = 1.0
    ppe_x: float = 0.6
    ppe_b: float = 0.01
    ppe_m: float = 0.028
    windows: Tuple[float, ...] = (3600.0, 86400.0, 604800.0, 2592000.0, math.inf)

    def __post_init__(self):
        if self.eta <= 0 or self.pattern_len < 1 or self.rpfa_ghosts < 0:
            raise ConfigError("hyper-parameters must be positive")
        for d in (self.rpfa_decay_failure, self.rpfa_decay_success):
            if not (0.0 < d <= 1.0):
                raise ConfigError(f"decay rates must lie in (0, 1], got {d}")
        if list(self.windows) != sorted(self.windows):
            raise ConfigError("time windows must be ascending (nested)")


# Canonical block order; agnostic families first, then course-specific ones.
AGNOSTIC_FAMILIES = (
    "bias",
    "total_counts",
    "kc_counts_shared",
    "smoothed_correctness",
    "response_pattern",
    "time_window_counts",
    "rpfa",
    "ppe",
    "lag_time",
    "response_time",
    "context_onehot",
    "context_counts",
    "difficulty_onehot",
    "difficulty_counts",
    "prereq_counts",
    "postreq_counts",
    "video_counts",
    "reading_counts",
)
SPECIFIC_FAMILIES = (
    "student_onehot",
    "question_onehot",
    "kc_onehot",
    "kc_counts_specific",
)
ALL_FAMILIES = AGNOSTIC_FAMILIES + SPECIFIC_FAMILIES
_FAMILY_RANK = {name: i for i, name in enumerate(ALL_FAMILIES)}

# Families that reference course content; a model keeping only the others can
# score any course. The student block is roster-specific rather than
# content-specific: agnostic presets may train with it (new students simply
# miss the block), but it is never carried into an agnostic model.
CONTENT_FAMILIES = ("question_onehot", "kc_onehot", "kc_counts_specific")


_ABEST_LR = ("bias", "student_onehot", "total_counts", "kc_counts_shared")
_ABEST_LR_PLUS = _ABEST_LR + (
    "smoothed_correctness", "response_pattern", "time_window_counts", "rpfa", "ppe",
)
_AAUGLR = _ABEST_LR_PLUS + (
    "lag_time", "response_time", "context_onehot", "context_counts",
    "difficulty_onehot", "difficulty_counts",
)
_BEST_LR = (
    "bias", "student_onehot", "question_onehot", "kc_onehot",
    "total_counts", "kc_counts_specific",
)

PRESET_FAMILIES: Dict[str, Tuple[str, ...]] = {
    "irt": ("student_onehot", "question_onehot"),
    "pfa": ("kc_onehot", "kc_counts_specific"),
    "das3h": ("student_onehot", "question_onehot", "kc_onehot", "time_window_counts"),
    "best-lr": _BEST_LR,
    "best-lr+": _BEST_LR + (
        "smoothed_correctness", "response_pattern", "time_window_counts", "rpfa", "ppe",
    ),
    "auglr": _BEST_LR + (
        "smoothed_correctness", "response_pattern", "time_window_counts", "rpfa", "ppe",
        "lag_time", "response_time", "context_onehot", "context_counts",
        "difficulty_onehot", "difficulty_counts",
    ),
    "a-pfa": ("bias", "kc_counts_shared"),
    "a-das3h": ("bias", "time_window_counts"),
    "a-best-lr": _ABEST_LR,
    "a-best-lr+": _ABEST_LR_PLUS,
    "a-auglr": _AAUGLR,
    "a-auglr+kc": _AAUGLR + ("kc_onehot", "kc_counts_specific"),
    "a-auglr+quest": _AAUGLR + ("question_onehot",),
    "a-auglr+kc+quest": _AAUGLR + ("question_onehot", "kc_onehot", "kc_counts_specific"),
}


@dataclass(frozen=True)
class ExtractorConfig:
    """Declarative description of which feature families a model consumes."""

    families: Tuple[str, ...]
    context_labels: Tuple[str, ...] = DEFAULT_CONTEXT_LABELS
    hyper: HyperParams = field(default_factory=HyperParams)
    p_bar: float = 0.5

    def __post_init__(self):
        unknown = [f for f in self.families if f not in _FAMILY_RANK]
        if unknown:
            raise ConfigError(f"unknown feature families {unknown}")
        if len(set(self.families)) != len(self.families):
            raise ConfigError("duplicate feature families in config")

    @classmethod
    def preset(cls, name: str, **overrides) -> "ExtractorConfig":
        if name not in PRESET_FAMILIES:
            raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESET_FAMILIES)}")
        return cls(families=PRESET_FAMILIES[name], **overrides)

    def with_families(self, extra: Iterable[str]) -> "ExtractorConfig":
        merged = tuple(dict.fromkeys(self.families + tuple(extra)))
        return replace(self, families=merged)


@dataclass(frozen=True)
class FeatureBlock:
    """One contiguous run of feature indices belonging to a single family."""

    family: str
    offset: int
    size: int
    agnostic: bool
    ids: Optional[Tuple[str, ...]] = None  # one-hot id order, when applicable

    def __post_init__(self):
        index = {v: i for i, v in enumerate(self.ids)} if self.ids else {}
        object.__setattr__(self, "_index", index)

    @property
    def index(self) -> Dict[str, int]:
        return self._index


@dataclass(frozen=True)
class FeatureSchema:
    """Immutable feature-space layout plus the extraction constants baked in."""

    blocks: Tuple[FeatureBlock, ...]
    dim: int
    config: ExtractorConfig

    def block(self, family: str) -> Optional[FeatureBlock]:
        for b in self.blocks:
            if b.family == family:
                return b
        return None

    @property
    def agnostic_dim(self) -> int:
        return sum(b.size for b in self.blocks if b.agnostic)

    def agnostic_subschema(self) -> "FeatureSchema":
        """Schema restricted to agnostic blocks; offsets are unchanged because
        agnostic families always come first in the canonical order."""
        families = tuple(b.family for b in self.blocks if b.agnostic)
        cfg = replace(self.config, families=families)
        sub = build_schema(cfg)
        if any(a.offset != b.offset or a.size != b.size
               for a, b in zip(sub.blocks, [x for x in self.blocks if x.agnostic])):
            raise SchemaError("agnostic blocks are not a prefix of this schema")
        return sub

    def fingerprint(self) -> str:
        """Hash of everything that affects layout or feature values."""
        doc = {
            "v": 1,
            "labels": list(self.config.context_labels),
            "hyper": {
                k: (repr(v) if isinstance(v, float) else list(v) if isinstance(v, tuple) else v)
                for k, v in vars(self.config.hyper).items()
            },
            "p_bar": self.config.p_bar.hex(),
            "blocks": [
                [
                    b.family,
                    b.size,
                    b.agnostic,
                    hashlib.sha256("\x00".join(b.ids).encode()).hexdigest() if b.ids else None,
                ]
                for b in self.blocks
            ],
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _family_layout(
    family: str,
    config: ExtractorConfig,
    course_meta: Optional[CourseMeta],
    roster: Optional[Sequence[str]],
) -> Tuple[int, Optional[Tuple[str, ...]]]:
    """(size, one-hot id order) for one family under the given context."""
    hyper = config.hyper
    if family == "bias":
        return 1, None
    if family == "total_counts":
        return 2, None
    if family == "kc_counts_shared":
        return 2, None
    if family == "smoothed_correctness":
        return 1, None
    if family == "response_pattern":
        return 2 * hyper.pattern_len, None
    if family == "time_window_counts":
        return 2 * len(hyper.windows), None
    if family == "rpfa":
        return 2, None
    if family == "ppe":
        return 1, None
    if family in ("lag_time", "response_time", "video_counts", "reading_counts"):
        return 1, None
    if family == "context_onehot":
        return len(config.context_labels), tuple(config.context_labels)
    if family == "context_counts":
        return 2 * len(config.context_labels), None
    if family == "difficulty_onehot":
        return DIFFICULTY_BUCKETS, None
    if family == "difficulty_counts":
        return 2 * DIFFICULTY_BUCKETS, None
    if family in ("prereq_counts", "postreq_counts"):
        return 2, None
    if family == "student_onehot":
        if roster is None:
            raise ConfigError("student_onehot requires training_student_ids")
        ids = tuple(sorted(roster))
        return len(ids), ids
    if family == "question_onehot":
        if course_meta is None:
            raise ConfigError("question_onehot requires course_meta")
        ids = tuple(sorted(course_meta.questions))
        return len(ids), ids
    if family == "kc_onehot":
        if course_meta is None:
            raise ConfigError("kc_onehot requires course_meta")
        return len(course_meta.kcs), tuple(course_meta.kcs)
    if family == "kc_counts_specific":
        if course_meta is None:
            raise ConfigError("kc_counts_specific requires course_meta")
        return 2 * len(course_meta.kcs), tuple(course_meta.kcs)
    raise ConfigError(f"unknown feature family {family!r}")


def build_schema(
    config: ExtractorConfig,
    course_meta: Optional[CourseMeta] = None,
    training_student_ids: Optional[Sequence[str]] = None,
) -> FeatureSchema:
    """Lay out the enabled families in canonical order.

    Agnostic families are positioned identically for any course given the
    same config; course-specific families are sized from the course content
    and the training roster.
    """
    ordered = sorted(config.families, key=lambda f: _FAMILY_RANK[f])
    blocks: List[FeatureBlock] = []
    offset = 0
    for family in ordered:
        size, ids = _family_layout(family, config, course_meta, training_student_ids)
        blocks.append(FeatureBlock(
            family=family,
            offset=offset,
            size=size,
            agnostic=family in AGNOSTIC_FAMILIES,
            ids=ids,
        ))
        offset += size
    return FeatureSchema(blocks=tuple(blocks), dim=offset, config=config)


@dataclass(frozen=True)
class SparseVector:
    """Sorted sparse feature vector; indices strictly increasing, no stored zeros."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def dot(self, weights: np.ndarray) -> float:
        if weights.shape[0] != self.dim:
            raise SchemaError(f"weight dim {weights.shape[0]} != vector dim {self.dim}")
        # fsum is exactly rounded, so padding a weight vector with zero blocks
        # cannot perturb predictions (naive transfer == zero-pilot tuning).
        return math.fsum(weights[self.indices] * self.values)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def check(self) -> None:
        """Assert the representation invariants (test helper)."""
        idx = self.indices
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise SchemaError("index out of range")
            if np.any(np.diff(idx) <= 0):
                raise SchemaError("indices not strictly increasing")
        if np.any(self.values == 0.0):
            raise SchemaError("explicit zero stored")


def sparse_vector(dim: int, entries: Sequence[Tuple[int, float]]) -> SparseVector:
    """Build a SparseVector from (index, value) pairs, dropping zeros."""
    kept = [(i, v) for i, v in entries if v != 0.0]
    kept.sort(key=lambda t: t[0])
    idx = np.fromiter((i for i, _ in kept), dtype=np.int32, count=len(kept))
    val = np.fromiter((v for _, v in kept), dtype=np.float64, count=len(kept))
    return SparseVector(dim=dim, indices=idx, values=val)
