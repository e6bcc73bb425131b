"""Metrics, cross-validation, and the transfer-experiment runners."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .bkt import CourseBkt, fit_course_bkt, predict_course_bkt
from .domain import Dataset
from .errors import MetricError, TrainingError
from .features.matrix import CourseDesign, design_for_model, extract_course_design
from .features.schema import ExtractorConfig, build_schema
from .ingest import (
    FoldAssignment,
    filter_min_responses,
    sample_pilot_students,
    split_by_student,
    subset_dataset,
)
from .linmodel import PROB_EPS, TrainConfig, predict_matrix, train_matrix
from .transfer import (
    DEFAULT_LAMBDA,
    AgnosticModel,
    ModelSpec,
    TargetModel,
    _fit_irt_delta,
    apply_agnostic,
    get_spec,
    predict_online_airt,
    source_correct_rate,
    train_agnostic,
    train_scratch,
    tune_inductive,
)

DEFAULT_CONVENTIONAL = ("bkt", "pfa", "irt", "das3h", "best-lr", "best-lr+")


def accuracy(preds: Sequence[float], labels: Sequence[int]) -> float:
    """Fraction of correct 0.5-thresholded predictions (>= 0.5 predicts 1)."""
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape or p.size == 0:
        raise MetricError(f"bad metric input shapes {p.shape} vs {y.shape}")
    return float(np.mean((p >= 0.5) == (y == 1)))


def auc(preds: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-statistic AUC: P(random positive outranks random negative), ties half.

    Single-class label sets have no ranking to measure; that is an error here,
    not a 0.5 convention.
    """
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape or p.size == 0:
        raise MetricError(f"bad metric input shapes {p.shape} vs {y.shape}")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(p.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: labels contain a single class")
    ranks = rankdata(p, method="average")
    pos_rank_sum = float(np.sum(ranks[pos]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class MetricReport:
    model_name: str
    course_id: str
    n_predictions: int
    acc: float
    auc: float
    per_fold_acc: Tuple[float, ...] = ()
    per_fold_auc: Tuple[float, ...] = ()

    @property
    def acc_variance(self) -> float:
        return float(np.var(self.per_fold_acc)) if self.per_fold_acc else 0.0

    @property
    def auc_variance(self) -> float:
        return float(np.var(self.per_fold_auc)) if self.per_fold_auc else 0.0


@dataclass
class FittedCourseModel:
    """One trained course-specific model of any class, ready to score data."""

    spec: ModelSpec
    logistic: Optional[TargetModel] = None
    bkt: Optional[CourseBkt] = None
    irt_delta: Optional[float] = None


def fit_course_model(
    train_dataset: Dataset,
    spec: ModelSpec,
    train_config: Optional[TrainConfig] = None,
    design: Optional[CourseDesign] = None,
) -> FittedCourseModel:
    """Train any model-zoo preset on one course's training data."""
    train_config = train_config or TrainConfig()
    if spec.model_class == "constant":
        return FittedCourseModel(spec)
    if spec.model_class == "bkt":
        return FittedCourseModel(spec, bkt=fit_course_bkt(train_dataset))
    if spec.model_class == "irt-online":
        return FittedCourseModel(spec, irt_delta=_fit_irt_delta([train_dataset], train_config))
    model = train_scratch(train_dataset, spec, train_config, design=design)
    return FittedCourseModel(spec, logistic=model)


def predict_course_model(
    fitted: FittedCourseModel,
    dataset: Dataset,
    design: Optional[CourseDesign] = None,
    rows: Optional[np.ndarray] = None,
):
    """(predictions, labels) of a fitted model over a dataset (or design rows)."""
    if fitted.spec.model_class == "constant":
        if design is not None and rows is not None:
            y = design.y[rows]
        else:
            y = np.asarray([x.correct for sid in sorted(dataset.histories)
                            for x in dataset.histories[sid].interactions if x.is_question],
                           dtype=np.int8)
        return np.full(y.shape[0], 1.0 - PROB_EPS), y
    if fitted.spec.model_class == "bkt":
        return predict_course_bkt(fitted.bkt, dataset)
    if fitted.spec.model_class == "irt-online":
        return predict_online_airt(fitted.irt_delta, dataset)
    model = fitted.logistic
    if design is not None:
        subset = [rows] if rows is not None else None
        X, y = design_for_model([design], model.schema, model.p_bar, row_subsets=subset)
        return predict_matrix(model.weights.values, X), y
    from .transfer import predict_target_model

    return predict_target_model(model, dataset)


def cross_validate(
    dataset: Dataset,
    spec: ModelSpec,
    k: int = 5,
    seed: int = 0,
    train_config: Optional[TrainConfig] = None,
    design: Optional[CourseDesign] = None,
) -> MetricReport:
    """Student-level k-fold CV: train on k-1 folds, score the held-out fold."""
    train_config = train_config or TrainConfig()
    folds = split_by_student(dataset, k, seed)
    need_design = spec.model_class == "logistic" and design is None
    if need_design:
        design = extract_course_design(dataset)

    fold_acc: List[float] = []
    fold_auc: List[float] = []
    n_total = 0
    for fold in range(k):
        test_ids = folds.fold_students(fold)
        train_ids = folds.train_students(fold)
        train_ds = subset_dataset(dataset, train_ids)
        test_ds = subset_dataset(dataset, test_ids)
        try:
            fitted = fit_course_model(train_ds, spec, train_config, design=_restricted(design, train_ids))
        except TrainingError as exc:
            raise TrainingError(f"fold {fold}: {exc}") from exc
        rows = design.rows_for(test_ids) if design is not None else None
        preds, labels = predict_course_model(fitted, test_ds, design=design, rows=rows)
        fold_acc.append(accuracy(preds, labels))
        fold_auc.append(auc(preds, labels))
        n_total += labels.shape[0]
    return MetricReport(
        model_name=spec.name,
        course_id=dataset.course_id,
        n_predictions=n_total,
        acc=float(np.mean(fold_acc)),
        auc=float(np.mean(fold_auc)),
        per_fold_acc=tuple(fold_acc),
        per_fold_auc=tuple(fold_auc),
    )


class _RestrictedDesign:
    """View of a CourseDesign limited to some students (for training fits)."""

    def __init__(self, design: CourseDesign, student_ids):
        self._design = design
        self._rows = design.rows_for(student_ids)
        self.course_id = design.course_id
        self.schema = design.schema
        self.X = design.X[self._rows]
        self.y = design.y[self._rows]
        self.row_students = design.row_students[self._rows]

    def rows_for(self, student_ids):
        wanted = set(student_ids)
        mask = np.fromiter((s in wanted for s in self.row_students), dtype=bool,
                           count=len(self.row_students))
        return np.nonzero(mask)[0]


def _restricted(design, student_ids):
    if design is None:
        return None
    return _RestrictedDesign(design, student_ids)


def predict_agnostic_fast(model: AgnosticModel, design: CourseDesign,
                          rows: Optional[np.ndarray] = None):
    """Matrix-path naive-transfer predictions for logistic agnostic models."""
    subset = [rows] if rows is not None else None
    X, y = design_for_model([design], model.schema(), model.p_bar, row_subsets=subset)
    return predict_matrix(model.weights.values, X), y


def run_naive_transfer_experiment(
    courses: Sequence[Dataset],
    specs: Sequence[ModelSpec],
    train_config: Optional[TrainConfig] = None,
    pairwise: bool = False,
    designs: Optional[Sequence[CourseDesign]] = None,
    min_responses: int = 10,
    include_baseline: bool = True,
    cv_seed: int = 0,
) -> List[dict]:
    """Target-holdout (or pairwise) naive-transfer table.

    Holdout mode: each course once plays the unseen target; the agnostic
    models train on the remaining courses. Pairwise mode: every single-source
    -> target cell, with same-course diagonals filled by 5-fold CV.
    """
    if len(courses) < 2:
        raise TrainingError("naive transfer needs at least two courses")
    train_config = train_config or TrainConfig()
    courses = [filter_min_responses(c, min_responses) for c in courses]
    need_designs = any(s.model_class == "logistic" for s in specs)
    if designs is None and need_designs:
        designs = [extract_course_design(c) for c in courses]

    rows: List[dict] = []

    def emit(model_name, train_label, target, preds, labels):
        rows.append({
            "model": model_name,
            "train": train_label,
            "target": target.course_id,
            "n": int(labels.shape[0]),
            "acc": accuracy(preds, labels),
            "auc": auc(preds, labels),
        })

    if pairwise:
        for si, source in enumerate(courses):
            for ti, target in enumerate(courses):
                spec = specs[0]
                if si == ti:
                    report = cross_validate(target, spec, 5, cv_seed, train_config,
                                            design=designs[ti] if designs else None)
                    rows.append({
                        "model": spec.name, "train": source.course_id,
                        "target": target.course_id, "n": report.n_predictions,
                        "acc": report.acc, "auc": report.auc,
                    })
                    continue
                model = train_agnostic([source], spec, train_config,
                                       designs=[designs[si]] if designs else None)
                preds, labels = predict_agnostic_fast(model, designs[ti])
                emit(spec.name, source.course_id, target, preds, labels)
        return rows

    for ti, target in enumerate(courses):
        sources = [c for i, c in enumerate(courses) if i != ti]
        source_designs = [d for i, d in enumerate(designs) if i != ti] if designs else None
        label = "+".join(c.course_id for c in sources)
        if include_baseline:
            n = sum(h.question_count() for h in target.histories.values())
            y = designs[ti].y if designs else np.asarray(
                [x.correct for sid in sorted(target.histories)
                 for x in target.histories[sid].interactions if x.is_question], dtype=np.int8)
            emit("always-correct", label, target, np.full(n, 1.0 - PROB_EPS), y)
        for spec in specs:
            model = train_agnostic(sources, spec, train_config, designs=source_designs)
            if spec.model_class == "logistic":
                preds, labels = predict_agnostic_fast(model, designs[ti])
            else:
                preds, labels = apply_agnostic(model, target)
            emit(spec.name, label, target, preds, labels)
    return rows


def run_inductive_experiment(
    courses: Sequence[Dataset],
    target_index: int,
    pilot_sizes: Sequence[int],
    seeds: Sequence[int],
    lam: float = DEFAULT_LAMBDA,
    k: int = 5,
    conventional: Sequence[str] = DEFAULT_CONVENTIONAL,
    base_spec_name: str = "a-auglr",
    train_config: Optional[TrainConfig] = None,
    split_seed: int = 0,
    min_responses: int = 10,
) -> List[dict]:
    """Learning-curve experiment on one target course.

    Each seed evaluates one CV fold (seed i -> fold i mod k) and samples its
    pilot cohort from the fold's training students. Pilot size 0 is the naive
    transfer point, so only the tuned model is evaluated there.
    """
    train_config = train_config or TrainConfig()
    courses = [filter_min_responses(c, min_responses) for c in courses]
    target = courses[target_index]
    sources = [c for i, c in enumerate(courses) if i != target_index]
    base_spec = get_spec(base_spec_name)

    source_designs = [extract_course_design(c) for c in sources]
    pretrained = train_agnostic(sources, base_spec, train_config, designs=source_designs)
    target_design = extract_course_design(target)
    folds = split_by_student(target, k, split_seed)

    rows: List[dict] = []

    def emit(model_name, seed, fold, size, preds, labels):
        rows.append({
            "model": model_name,
            "target": target.course_id,
            "seed": seed,
            "fold": fold,
            "pilot_size": size,
            "n": int(labels.shape[0]),
            "acc": accuracy(preds, labels),
            "auc": auc(preds, labels),
        })

    for seed in seeds:
        fold = seed % k
        test_ids = folds.fold_students(fold)
        train_ids = folds.train_students(fold)
        train_ds = subset_dataset(target, train_ids)
        test_ds = subset_dataset(target, test_ids)
        test_rows = target_design.rows_for(test_ids)

        naive_preds, naive_labels = predict_agnostic_fast(pretrained, target_design, test_rows)
        emit(base_spec.name, seed, fold, -1, naive_preds, naive_labels)

        for size in pilot_sizes:
            pilot_seed = 100003 * (seed + 1) + size
            pilot = sample_pilot_students(train_ds, size, pilot_seed)

            tuned = tune_inductive(pretrained, pilot, lam, train_config, design=target_design)
            X, y = design_for_model([target_design], tuned.schema, tuned.p_bar,
                                    row_subsets=[test_rows])
            emit("i-auglr", seed, fold, size, predict_matrix(tuned.weights.values, X), y)

            if size == 0:
                continue

            scratch = train_scratch(pilot, get_spec("s-auglr"), train_config,
                                    design=target_design)
            X, y = design_for_model([target_design], scratch.schema, scratch.p_bar,
                                    row_subsets=[test_rows])
            emit("s-auglr", seed, fold, size, predict_matrix(scratch.weights.values, X), y)

            for name in conventional:
                spec = get_spec(name)
                fitted = fit_course_model(pilot, spec, train_config,
                                          design=_restricted(target_design, list(pilot.histories)))
                preds, labels = predict_course_model(fitted, test_ds,
                                                     design=target_design, rows=test_rows)
                emit(name, seed, fold, size, preds, labels)
    return rows
