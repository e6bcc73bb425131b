"""Transfer regimes: naive course-agnostic application and inductive tuning.

An agnostic model is trained on pooled source courses (logistic presets keep
a source-student ability block during training, then drop it — new-course
students never hit it anyway). Inductive tuning pads the agnostic weights
with zeros for target-specific question/KC blocks and retrains under an L2
pull toward that padded center.
"""

import json
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .bkt import BktParams, CourseBkt, fit_agnostic_bkt, fit_course_bkt, predict_course_bkt, predict_dataset_bkt
from .domain import Dataset
from .errors import ConfigError, SchemaError, TrainingError
from .features.extract import extract, fresh_state
from .features.matrix import CourseDesign, design_for_model, projection_operator
from .features.schema import (
    AGNOSTIC_FAMILIES,
    CONTENT_FAMILIES,
    PRESET_FAMILIES,
    ExtractorConfig,
    FeatureSchema,
    HyperParams,
    build_schema,
)
from .features.state import update_state
from .linmodel import (
    PROB_EPS,
    PriorSpec,
    TrainConfig,
    WeightVector,
    decode_weights,
    encode_weights,
    predict_matrix,
    sigmoid,
    train_matrix,
)

DEFAULT_LAMBDA = 5.0
AIRT_STEP_SIZE = 0.1

TARGET_EXTRA_FAMILIES = ("question_onehot", "kc_onehot", "kc_counts_specific")


@dataclass(frozen=True)
class ModelSpec:
    """A named model: feature families plus the estimator class."""

    name: str
    model_class: str  # logistic | bkt | irt-online | constant
    families: Tuple[str, ...] = ()
    agnostic: bool = False

    def __post_init__(self):
        if self.model_class not in ("logistic", "bkt", "irt-online", "constant"):
            raise ConfigError(f"unknown model class {self.model_class!r}")
        if self.agnostic and self.model_class == "logistic":
            bad = [f for f in self.families if f in CONTENT_FAMILIES]
            if bad:
                raise ConfigError(f"agnostic spec {self.name!r} uses content families {bad}")


def _logistic(name, agnostic=False, families=None):
    return ModelSpec(name, "logistic",
                     tuple(families if families is not None else PRESET_FAMILIES[name]),
                     agnostic)


MODEL_ZOO: Dict[str, ModelSpec] = {
    # course-specific references (train and test on the same course)
    "bkt": ModelSpec("bkt", "bkt"),
    "irt": _logistic("irt"),
    "pfa": _logistic("pfa"),
    "das3h": _logistic("das3h"),
    "best-lr": _logistic("best-lr"),
    "best-lr+": _logistic("best-lr+"),
    "auglr": _logistic("auglr"),
    "a-auglr+kc": _logistic("a-auglr+kc"),
    "a-auglr+quest": _logistic("a-auglr+quest"),
    "a-auglr+kc+quest": _logistic("a-auglr+kc+quest"),
    # the scratch counterpart of inductive tuning: target schema, no student block
    "s-auglr": ModelSpec(
        "s-auglr", "logistic",
        tuple(f for f in PRESET_FAMILIES["a-auglr"] if f != "student_onehot")
        + TARGET_EXTRA_FAMILIES,
    ),
    # course-agnostic models
    "a-bkt": ModelSpec("a-bkt", "bkt", agnostic=True),
    "a-irt": ModelSpec("a-irt", "irt-online", agnostic=True),
    "a-pfa": _logistic("a-pfa", agnostic=True),
    "a-das3h": _logistic("a-das3h", agnostic=True),
    "a-best-lr": _logistic("a-best-lr", agnostic=True),
    "a-best-lr+": _logistic("a-best-lr+", agnostic=True),
    "a-auglr": _logistic("a-auglr", agnostic=True),
    # degenerate baseline from the reference tables
    "always-correct": ModelSpec("always-correct", "constant"),
}


def get_spec(name: str) -> ModelSpec:
    try:
        return MODEL_ZOO[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; known: {sorted(MODEL_ZOO)}") from None


def source_correct_rate(datasets: Sequence[Dataset]) -> float:
    n = 0
    c = 0
    for d in datasets:
        for h in d.histories.values():
            for x in h.interactions:
                if x.is_question:
                    n += 1
                    c += x.correct
    if n == 0:
        raise TrainingError("no question interactions in the source data")
    return c / n


@dataclass(frozen=True)
class AgnosticModel:
    """A course-agnostic model: applies unchanged to any course."""

    spec: ModelSpec
    source_course_ids: Tuple[str, ...]
    p_bar: float
    config: ExtractorConfig  # agnostic families only; p_bar baked in
    weights: Optional[WeightVector] = None  # logistic
    bkt_params: Optional[BktParams] = None  # bkt
    irt_delta: Optional[float] = None  # irt-online

    def schema(self) -> FeatureSchema:
        return build_schema(self.config)


@dataclass(frozen=True)
class TargetModel:
    """A course-specific model (tuned or trained from scratch)."""

    name: str
    course_id: str
    weights: WeightVector
    config: ExtractorConfig
    p_bar: float
    lam: float
    schema: FeatureSchema


def _pooled_roster(datasets: Sequence[Dataset]) -> List[str]:
    roster: List[str] = []
    for d in datasets:
        roster.extend(d.histories)
    if len(set(roster)) != len(roster):
        raise ConfigError("student ids collide across source courses")
    return sorted(roster)


def _get_designs(datasets, designs):
    if designs is None:
        from .features.matrix import extract_course_design

        designs = [extract_course_design(d) for d in datasets]
    return designs


def _fit_irt_delta(datasets: Sequence[Dataset], config: TrainConfig) -> float:
    """Global difficulty of a shared-difficulty Rasch fit: sigma(a_s - delta).

    Built directly (bias column + student one-hot), no feature extraction
    needed. Returns delta = -bias weight.
    """
    roster = {sid: i for i, sid in enumerate(_pooled_roster(datasets))}
    rows_idx: List[int] = []
    rows_val: List[float] = []
    indptr = [0]
    y: List[int] = []
    for d in datasets:
        for sid in sorted(d.histories):
            col = 1 + roster[sid]
            for x in d.histories[sid].interactions:
                if x.is_question:
                    rows_idx.extend((0, col))
                    rows_val.extend((1.0, 1.0))
                    indptr.append(len(rows_idx))
                    y.append(x.correct)
    X = sp.csr_matrix(
        (np.asarray(rows_val), np.asarray(rows_idx, dtype=np.int32),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(y), 1 + len(roster)),
    )
    w = train_matrix(X, np.asarray(y, dtype=np.float64), config)
    return -float(w.values[0])


def train_agnostic(
    source_datasets: Sequence[Dataset],
    spec: ModelSpec,
    train_config: Optional[TrainConfig] = None,
    designs: Optional[Sequence[CourseDesign]] = None,
) -> AgnosticModel:
    """Fit a course-agnostic model on pooled source-course data."""
    if not spec.agnostic:
        raise ConfigError(f"spec {spec.name!r} is not agnostic")
    if not source_datasets:
        raise ConfigError("need at least one source dataset")
    train_config = train_config or TrainConfig()
    p_bar = source_correct_rate(source_datasets)
    labels = source_datasets[0].context_labels
    source_ids = tuple(d.course_id for d in source_datasets)

    if spec.model_class == "bkt":
        params = fit_agnostic_bkt(source_datasets)
        cfg = ExtractorConfig(families=(), context_labels=labels, p_bar=p_bar)
        return AgnosticModel(spec, source_ids, p_bar, cfg, bkt_params=params)

    if spec.model_class == "irt-online":
        delta = _fit_irt_delta(source_datasets, train_config)
        cfg = ExtractorConfig(families=(), context_labels=labels, p_bar=p_bar)
        return AgnosticModel(spec, source_ids, p_bar, cfg, irt_delta=delta)

    designs = _get_designs(source_datasets, designs)
    train_cfg_x = ExtractorConfig(families=spec.families, context_labels=labels, p_bar=p_bar)
    roster = _pooled_roster(source_datasets)
    train_schema = build_schema(train_cfg_x, training_student_ids=roster)
    X, y = design_for_model(designs, train_schema, p_bar)
    w = train_matrix(X, y.astype(np.float64), train_config,
                     fingerprint=train_schema.fingerprint())

    # Drop the source-student ability block: unseen target students would
    # contribute zero through it anyway, and dropping it keeps the stored
    # model genuinely course-free.
    agnostic_families = tuple(f for f in spec.families if f in AGNOSTIC_FAMILIES)
    agn_cfg = replace(train_cfg_x, families=agnostic_families)
    agn_schema = build_schema(agn_cfg)
    values = np.array(w.values[: agn_schema.dim])
    weights = WeightVector(agn_schema.dim, values, agn_schema.fingerprint())
    return AgnosticModel(spec, source_ids, p_bar, agn_cfg, weights=weights)


def predict_logistic_streaming(
    weights: WeightVector,
    schema: FeatureSchema,
    dataset: Dataset,
    hyper: Optional[HyperParams] = None,
):
    """Per-interaction replay prediction (the reference path for logistic models)."""
    if weights.schema_fingerprint and weights.schema_fingerprint != schema.fingerprint():
        raise SchemaError("weights were trained under a different schema layout")
    hyper = hyper or schema.config.hyper
    meta = dataset.course_meta
    w = weights.values
    preds: List[float] = []
    labels: List[int] = []
    for sid in sorted(dataset.histories):
        state = fresh_state(hyper)
        for x in dataset.histories[sid].interactions:
            if x.is_question:
                vec = extract(state, x, schema, hyper, course_meta=meta)
                p = sigmoid(vec.dot(w))
                preds.append(float(min(max(p, PROB_EPS), 1.0 - PROB_EPS)))
                labels.append(x.correct)
            update_state(state, x)
    return np.asarray(preds), np.asarray(labels, dtype=np.int8)


def predict_online_airt(source_fit, target_dataset: Dataset, step_size: float = AIRT_STEP_SIZE):
    """Online ability tracing against a single global difficulty parameter.

    Per (student, KC): predict sigma(a - delta), then ascend the observation
    log-likelihood: a += step * (y - p). Multi-KC questions average chains.
    """
    delta = source_fit.irt_delta if isinstance(source_fit, AgnosticModel) else float(source_fit)
    preds: List[float] = []
    labels: List[int] = []
    for sid in sorted(target_dataset.histories):
        ability: Dict[str, float] = {}
        for x in target_dataset.histories[sid].interactions:
            if not x.is_question:
                continue
            ps = [sigmoid(ability.get(kc, 0.0) - delta) for kc in x.kc_ids]
            preds.append(float(np.clip(sum(ps) / len(ps), PROB_EPS, 1.0 - PROB_EPS)))
            labels.append(x.correct)
            for kc, p in zip(x.kc_ids, ps):
                ability[kc] = ability.get(kc, 0.0) + step_size * (x.correct - p)
    return np.asarray(preds), np.asarray(labels, dtype=np.int8)


def apply_agnostic(model: AgnosticModel, target_dataset: Dataset):
    """Naive transfer: stream the target course through the agnostic model.

    Never errors on unseen question/KC/student ids — agnostic features carry
    no course-specific identities.
    """
    if model.spec.model_class == "bkt":
        return predict_dataset_bkt(model.bkt_params, target_dataset)
    if model.spec.model_class == "irt-online":
        return predict_online_airt(model, target_dataset)
    if model.spec.model_class == "constant":
        n = sum(h.question_count() for h in target_dataset.histories.values())
        labels = [x.correct for sid in sorted(target_dataset.histories)
                  for x in target_dataset.histories[sid].interactions if x.is_question]
        return np.full(n, 1.0 - PROB_EPS), np.asarray(labels, dtype=np.int8)
    return predict_logistic_streaming(model.weights, model.schema(), target_dataset)


def embed_prior(model: AgnosticModel, target_schema: FeatureSchema, lam: float = DEFAULT_LAMBDA) -> PriorSpec:
    """Pad the agnostic weights with zeros into the target space."""
    if model.weights is None:
        raise ConfigError(f"model {model.spec.name!r} has no padded-prior form")
    agn = model.schema()
    prefix = [b for b in target_schema.blocks if b.agnostic]
    if len(prefix) != len(agn.blocks) or any(
        a.family != b.family or a.offset != b.offset or a.size != b.size
        for a, b in zip(agn.blocks, prefix)
    ):
        raise SchemaError("target schema's agnostic blocks do not match the model's schema")
    center = np.zeros(target_schema.dim)
    center[: agn.dim] = model.weights.values
    return PriorSpec(
        center=WeightVector(target_schema.dim, center, target_schema.fingerprint()),
        lam=lam,
    )


def build_target_schema(model: AgnosticModel, pilot: Dataset) -> Tuple[ExtractorConfig, FeatureSchema]:
    """Agnostic blocks plus target-course question/KC one-hots and per-KC counts."""
    cfg = replace(
        model.config,
        families=tuple(model.config.families) + TARGET_EXTRA_FAMILIES,
    )
    return cfg, build_schema(cfg, course_meta=pilot.course_meta)


def tune_inductive(
    model: AgnosticModel,
    pilot: Dataset,
    lam: float = DEFAULT_LAMBDA,
    train_config: Optional[TrainConfig] = None,
    design: Optional[CourseDesign] = None,
) -> TargetModel:
    """Fine-tune the agnostic model on pilot data under the padded Gaussian prior.

    An empty pilot returns the padded model unchanged — the zero-student case
    is exactly naive transfer.
    """
    train_config = train_config or TrainConfig()
    cfg, schema = build_target_schema(model, pilot)
    prior = embed_prior(model, schema, lam)

    n_pairs = sum(h.question_count() for h in pilot.histories.values())
    if n_pairs == 0:
        weights = WeightVector(schema.dim, np.array(prior.center.values),
                               schema.fingerprint())
    else:
        if design is not None:
            rows = design.rows_for(list(pilot.histories))
            X, y = design_for_model([design], schema, model.p_bar, row_subsets=[rows])
        else:
            from .features.matrix import extract_course_design

            d = extract_course_design(pilot)
            X, y = design_for_model([d], schema, model.p_bar)
        weights = train_matrix(
            X, y.astype(np.float64), train_config, prior=prior,
            init=prior.center.values, fingerprint=schema.fingerprint(),
        )
    return TargetModel(
        name=f"i-{model.spec.name.removeprefix('a-')}",
        course_id=pilot.course_id,
        weights=weights,
        config=cfg,
        p_bar=model.p_bar,
        lam=lam,
        schema=schema,
    )


def train_scratch(
    pilot: Dataset,
    spec: ModelSpec,
    train_config: Optional[TrainConfig] = None,
    p_bar: Optional[float] = None,
    init: Optional[np.ndarray] = None,
    design: Optional[CourseDesign] = None,
) -> TargetModel:
    """Train a course model from scratch on pilot data (no prior, lam = 0).

    `p_bar` defaults to the pilot's own correctness rate; pass the source rate
    to reproduce an inductive run's feature values exactly.
    """
    if spec.model_class != "logistic":
        raise ConfigError("train_scratch covers logistic specs; use bkt/irt fitters directly")
    train_config = train_config or TrainConfig()
    n_pairs = sum(h.question_count() for h in pilot.histories.values())
    if n_pairs == 0:
        raise TrainingError("cannot train from scratch on an empty pilot")
    if p_bar is None:
        p_bar = source_correct_rate([pilot])
    cfg = ExtractorConfig(
        families=spec.families,
        context_labels=pilot.context_labels,
        p_bar=p_bar,
    )
    roster = sorted(pilot.histories) if "student_onehot" in spec.families else None
    schema = build_schema(cfg, course_meta=pilot.course_meta, training_student_ids=roster)
    if design is not None:
        rows = design.rows_for(list(pilot.histories))
        X, y = design_for_model([design], schema, p_bar, row_subsets=[rows])
    else:
        from .features.matrix import extract_course_design

        d = extract_course_design(pilot)
        X, y = design_for_model([d], schema, p_bar)
    weights = train_matrix(X, y.astype(np.float64), train_config, init=init,
                           fingerprint=schema.fingerprint())
    return TargetModel(
        name=f"s-{spec.name}" if not spec.name.startswith("s-") else spec.name,
        course_id=pilot.course_id,
        weights=weights,
        config=cfg,
        p_bar=p_bar,
        lam=0.0,
        schema=schema,
    )


def predict_target_model(model: TargetModel, dataset: Dataset):
    """Streaming predictions of a tuned/scratch model on its own course."""
    return predict_logistic_streaming(model.weights, model.schema, dataset)


# ---------------------------------------------------------------------------
# Transfer bundle file: the agnostic model plus everything needed to rebuild
# its extraction pipeline (JSON; weights base64 like the model container).
# ---------------------------------------------------------------------------

def _hyper_to_doc(h: HyperParams) -> dict:
    doc = {k: v for k, v in vars(h).items() if k != "windows"}
    doc["windows"] = ["inf" if w == float("inf") else w for w in h.windows]
    return doc


def _hyper_from_doc(doc: dict) -> HyperParams:
    kw = dict(doc)
    kw["windows"] = tuple(float("inf") if w == "inf" else float(w) for w in kw["windows"])
    kw["pattern_len"] = int(kw["pattern_len"])
    kw["rpfa_ghosts"] = int(kw["rpfa_ghosts"])
    return HyperParams(**kw)


def save_bundle(path, model: AgnosticModel, lam: float = DEFAULT_LAMBDA) -> None:
    doc = {
        "format": "ktransfer-bundle",
        "version": 1,
        "spec": model.spec.name,
        "model_class": model.spec.model_class,
        "source_courses": list(model.source_course_ids),
        "p_bar": model.p_bar,
        "lambda": lam,
        "families": list(model.config.families),
        "context_labels": list(model.config.context_labels),
        "hyper": _hyper_to_doc(model.config.hyper),
    }
    if model.weights is not None:
        doc["dimension"] = model.weights.dim
        doc["schema_fingerprint"] = model.weights.schema_fingerprint
        doc["weights_b64"] = encode_weights(model.weights.values)
    if model.bkt_params is not None:
        p = model.bkt_params
        doc["bkt_params"] = [p.p_init, p.p_transit, p.p_guess, p.p_slip]
    if model.irt_delta is not None:
        doc["irt_delta"] = model.irt_delta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_bundle(path) -> Tuple[AgnosticModel, float]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "ktransfer-bundle" or doc.get("version") != 1:
        raise SchemaError(f"not a ktransfer bundle: {path}")
    spec = get_spec(doc["spec"])
    cfg = ExtractorConfig(
        families=tuple(doc["families"]),
        context_labels=tuple(doc["context_labels"]),
        hyper=_hyper_from_doc(doc["hyper"]),
        p_bar=doc["p_bar"],
    )
    weights = None
    if "weights_b64" in doc:
        schema = build_schema(cfg)
        if schema.fingerprint() != doc["schema_fingerprint"]:
            raise SchemaError("bundle schema fingerprint does not match the rebuilt schema")
        weights = WeightVector(doc["dimension"],
                               decode_weights(doc["weights_b64"], doc["dimension"]),
                               doc["schema_fingerprint"])
    bkt_params = BktParams(*doc["bkt_params"]) if "bkt_params" in doc else None
    model = AgnosticModel(
        spec=spec,
        source_course_ids=tuple(doc["source_courses"]),
        p_bar=doc["p_bar"],
        config=cfg,
        weights=weights,
        bkt_params=bkt_params,
        irt_delta=doc.get("irt_delta"),
    )
    return model, doc.get("lambda", DEFAULT_LAMBDA)
