"""Bulk extraction: one pass per course, then per-model column projection.

Experiment runners extract every feature family once per course into a CSR
matrix, then derive each model's design matrix by multiplying with a sparse
column-selection operator. The smoothed-correctness feature is stored as two
raw columns (count part and smoothing-mass part) appended after the union
layout, so the training population's correctness rate can be folded in at
projection time: composed = count_part + p_bar * mass_part.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..domain import Dataset
from ..errors import SchemaError
from .extract import _emit_row, fresh_state
from .schema import ALL_FAMILIES, ExtractorConfig, FeatureSchema, build_schema
from .state import update_state


@dataclass
class CourseDesign:
    """Union design matrix of one dataset plus row bookkeeping."""

    course_id: str
    schema: FeatureSchema  # union schema (all families, full roster)
    X: sp.csr_matrix  # shape (n_rows, schema.dim + 2); last 2 cols = split smoothed
    y: np.ndarray  # int8 labels, one per question interaction
    row_students: np.ndarray  # student id per row (object array)

    def rows_for(self, student_ids: Sequence[str]) -> np.ndarray:
        wanted = set(student_ids)
        mask = np.fromiter((s in wanted for s in self.row_students), dtype=bool,
                           count=len(self.row_students))
        return np.nonzero(mask)[0]


def extract_course_design(dataset: Dataset, config: Optional[ExtractorConfig] = None) -> CourseDesign:
    """Extract every family for every question interaction of a dataset.

    Row order: students sorted by id, each student's question events in time
    order — the same order the streaming prediction path uses.
    """
    if config is None:
        config = ExtractorConfig(families=ALL_FAMILIES,
                                 context_labels=dataset.context_labels)
    schema = build_schema(config, dataset.course_meta, list(dataset.histories))
    hyper = config.hyper
    meta = dataset.course_meta
    split_at = schema.dim

    indptr = [0]
    idx: List[int] = []
    val: List[float] = []
    labels: List[int] = []
    students: List[str] = []

    for sid in sorted(dataset.histories):
        state = fresh_state(hyper)
        for x in dataset.histories[sid].interactions:
            if x.is_question:
                _emit_row(state, x, schema, hyper, x.timestamp, meta, idx, val,
                          split_smoothed_at=split_at)
                indptr.append(len(idx))
                labels.append(x.correct)
                students.append(sid)
            update_state(state, x)

    X = sp.csr_matrix(
        (np.asarray(val, dtype=np.float64),
         np.asarray(idx, dtype=np.int32),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), schema.dim + 2),
    )
    X.sort_indices()
    return CourseDesign(
        course_id=dataset.course_id,
        schema=schema,
        X=X,
        y=np.asarray(labels, dtype=np.int8),
        row_students=np.asarray(students, dtype=object),
    )


def projection_operator(
    design: CourseDesign,
    model_schema: FeatureSchema,
    p_bar: float,
) -> sp.csr_matrix:
    """Sparse (union_dim + 2) x model_dim column-selection operator."""
    rows: List[int] = []
    cols: List[int] = []
    data: List[float] = []
    union = design.schema
    split_at = union.dim

    for mb in model_schema.blocks:
        ub = union.block(mb.family)
        if ub is None:
            raise SchemaError(f"union design lacks family {mb.family!r}")
        if mb.family == "smoothed_correctness":
            rows += [split_at, split_at + 1]
            cols += [mb.offset, mb.offset]
            data += [1.0, p_bar]
        elif mb.family == "student_onehot":
            uidx = ub.index
            for j, sid in enumerate(mb.ids):
                i = uidx.get(sid)
                if i is not None:
                    rows.append(ub.offset + i)
                    cols.append(mb.offset + j)
                    data.append(1.0)
        else:
            if mb.size != ub.size or (mb.ids or None) != (ub.ids or None):
                raise SchemaError(
                    f"family {mb.family!r} laid out differently in union and model schemas"
                )
            rows += range(ub.offset, ub.offset + ub.size)
            cols += range(mb.offset, mb.offset + mb.size)
            data += [1.0] * ub.size

    return sp.csr_matrix(
        (np.asarray(data), (np.asarray(rows), np.asarray(cols))),
        shape=(split_at + 2, model_schema.dim),
    )


def design_for_model(
    designs: Sequence[CourseDesign],
    model_schema: FeatureSchema,
    p_bar: float,
    row_subsets: Optional[Sequence[Optional[np.ndarray]]] = None,
):
    """(X, y) in the model's feature space, stacked over one or more courses.

    `row_subsets[i]`, when given, restricts course i to those row indices
    (e.g. a fold's students or a pilot cohort).
    """
    mats = []
    ys = []
    for i, design in enumerate(designs):
        X = design.X
        y = design.y
        if row_subsets is not None and row_subsets[i] is not None:
            X = X[row_subsets[i]]
            y = y[row_subsets[i]]
        mats.append(X @ projection_operator(design, model_schema, p_bar))
        ys.append(y)
    X = sp.vstack(mats, format="csr") if len(mats) > 1 else mats[0].tocsr()
    X.sort_indices()
    return X, np.concatenate(ys)
