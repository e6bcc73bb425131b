"""Feature extraction: prefix state + next question -> sparse vector.

The single row-assembly routine `_emit_row` is shared by the public
per-interaction API and the bulk matrix builder in `matrix.py`, so both paths
compute identical features by construction.
"""

import math
from typing import List, Optional, Tuple

import numpy as np

from ..domain import CourseMeta, Interaction, StudentHistory
from ..errors import SchemaError
from .families import (
    DIFFICULTY_BUCKETS,
    TIME_CAP_SECONDS,
    difficulty_bucket,
    ppe_feature,
    rpfa_features,
    smoothed_correctness,
    time_window_counts,
)
from .schema import FeatureSchema, HyperParams, SparseVector
from .state import RollingState, update_state


def fresh_state(hyper: HyperParams) -> RollingState:
    return RollingState(pattern_len=hyper.pattern_len)


def _emit_row(
    state: RollingState,
    x: Interaction,
    schema: FeatureSchema,
    hyper: HyperParams,
    now: int,
    course_meta: Optional[CourseMeta],
    out_idx: List[int],
    out_val: List[float],
    split_smoothed_at: int = -1,
) -> None:
    """Append this row's (index, value) pairs in ascending index order.

    When `split_smoothed_at >= 0`, the smoothed-correctness feature is written
    as two raw columns (count part, smoothing-mass part) starting at that
    extra offset instead of its composed value; the bulk path uses this to
    defer the choice of the training-population correctness rate.
    """
    labels = schema.config.context_labels
    p_bar = schema.config.p_bar
    kcs = x.kc_ids
    log1p = math.log1p  # counts are non-negative by construction

    for block in schema.blocks:
        fam = block.family
        off = block.offset

        if fam == "bias":
            out_idx.append(off)
            out_val.append(1.0)

        elif fam == "total_counts":
            if state.c_total:
                out_idx.append(off)
                out_val.append(log1p(state.c_total))
            if state.f_total:
                out_idx.append(off + 1)
                out_val.append(log1p(state.f_total))

        elif fam == "kc_counts_shared":
            c = 0.0
            f = 0.0
            for kc in kcs:
                c += log1p(state.kc_correct.get(kc, 0))
                f += log1p(state.kc_wrong.get(kc, 0))
            if c:
                out_idx.append(off)
                out_val.append(c)
            if f:
                out_idx.append(off + 1)
                out_val.append(f)

        elif fam == "smoothed_correctness":
            denom = state.c_total + state.f_total + hyper.eta
            if split_smoothed_at >= 0:
                out_idx.append(split_smoothed_at)
                out_val.append(state.c_total / denom)
                out_idx.append(split_smoothed_at + 1)
                out_val.append(hyper.eta / denom)
            else:
                v = smoothed_correctness(state.c_total, state.f_total, hyper.eta, p_bar)
                if v:
                    out_idx.append(off)
                    out_val.append(v)

        elif fam == "response_pattern":
            recent = state.recent
            m = len(recent)
            for i in range(1, min(hyper.pattern_len, m) + 1):
                y = recent[m - i]
                out_idx.append(off + 2 * (i - 1) + (0 if y == 1 else 1))
                out_val.append(1.0)

        elif fam == "time_window_counts":
            nw = len(hyper.windows)
            acc = [0.0] * (2 * nw)
            for kc in kcs:
                times = state.kc_times.get(kc)
                if not times:
                    continue
                per = time_window_counts(times, state.kc_outcomes[kc], now, hyper.windows)
                for w, (a, s) in enumerate(per):
                    acc[2 * w] += a
                    acc[2 * w + 1] += s
            for i, v in enumerate(acc):
                if v:
                    out_idx.append(off + i)
                    out_val.append(v)

        elif fam == "rpfa":
            fail = 0.0
            prop = 0.0
            for kc in kcs:
                fk, rk = rpfa_features(
                    state.kc_outcomes.get(kc, ()),
                    hyper.rpfa_decay_failure,
                    hyper.rpfa_decay_success,
                    hyper.rpfa_ghosts,
                )
                fail += fk
                prop += rk
            if fail:
                out_idx.append(off)
                out_val.append(fail)
            if prop:
                out_idx.append(off + 1)
                out_val.append(prop)

        elif fam == "ppe":
            v = 0.0
            for kc in kcs:
                times = state.kc_times.get(kc)
                if times:
                    v += ppe_feature(times, now, hyper.ppe_c, hyper.ppe_x,
                                     hyper.ppe_b, hyper.ppe_m)
            if v:
                out_idx.append(off)
                out_val.append(v)

        elif fam == "lag_time":
            ms = x.lag_time_ms
            if ms:
                out_idx.append(off)
                out_val.append(log1p(min(ms / 1000.0, TIME_CAP_SECONDS)))

        elif fam == "response_time":
            ms = state.prev_response_time_ms
            if ms:
                out_idx.append(off)
                out_val.append(log1p(min(ms / 1000.0, TIME_CAP_SECONDS)))

        elif fam == "context_onehot":
            i = block.index.get(x.context)
            if i is not None:
                out_idx.append(off + i)
                out_val.append(1.0)

        elif fam == "context_counts":
            for i, label in enumerate(labels):
                c = state.context_correct.get(label, 0)
                if c:
                    out_idx.append(off + 2 * i)
                    out_val.append(log1p(c))
                f = state.context_wrong.get(label, 0)
                if f:
                    out_idx.append(off + 2 * i + 1)
                    out_val.append(log1p(f))

        elif fam == "difficulty_onehot":
            if x.difficulty_rating is not None:
                out_idx.append(off + difficulty_bucket(x.difficulty_rating))
                out_val.append(1.0)

        elif fam == "difficulty_counts":
            for b in range(DIFFICULTY_BUCKETS):
                c = state.bucket_correct.get(b, 0)
                if c:
                    out_idx.append(off + 2 * b)
                    out_val.append(log1p(c))
                f = state.bucket_wrong.get(b, 0)
                if f:
                    out_idx.append(off + 2 * b + 1)
                    out_val.append(log1p(f))

        elif fam in ("prereq_counts", "postreq_counts"):
            if course_meta is None:
                raise SchemaError(f"{fam} requires course_meta (for the prerequisite graph)")
            related = course_meta.prereqs_of if fam == "prereq_counts" else course_meta.postreqs_of
            seen = set()
            c = 0
            f = 0
            for kc in kcs:
                for r in related.get(kc, ()):
                    if r not in seen:
                        seen.add(r)
                        c += state.kc_correct.get(r, 0)
                        f += state.kc_wrong.get(r, 0)
            if c:
                out_idx.append(off)
                out_val.append(log1p(c))
            if f:
                out_idx.append(off + 1)
                out_val.append(log1p(f))

        elif fam == "video_counts":
            if state.video_count:
                out_idx.append(off)
                out_val.append(log1p(state.video_count))

        elif fam == "reading_counts":
            if state.reading_count:
                out_idx.append(off)
                out_val.append(log1p(state.reading_count))

        elif fam == "student_onehot":
            i = block.index.get(x.student_id)
            if i is not None:
                out_idx.append(off + i)
                out_val.append(1.0)

        elif fam == "question_onehot":
            i = block.index.get(x.question_id)
            if i is None:
                raise SchemaError(
                    f"question {x.question_id!r} unknown to this course-specific schema"
                )
            out_idx.append(off + i)
            out_val.append(1.0)

        elif fam == "kc_onehot":
            idx = block.index
            hits = sorted(idx[kc] for kc in kcs if kc in idx)
            if len(hits) != len(kcs):
                missing = [kc for kc in kcs if kc not in idx]
                raise SchemaError(f"KCs {missing} unknown to this course-specific schema")
            for i in hits:
                out_idx.append(off + i)
                out_val.append(1.0)

        elif fam == "kc_counts_specific":
            idx = block.index
            entries = []
            for kc in kcs:
                i = idx.get(kc)
                if i is None:
                    raise SchemaError(f"KC {kc!r} unknown to this course-specific schema")
                c = state.kc_correct.get(kc, 0)
                if c:
                    entries.append((off + 2 * i, log1p(c)))
                f = state.kc_wrong.get(kc, 0)
                if f:
                    entries.append((off + 2 * i + 1, log1p(f)))
            entries.sort()
            for i, v in entries:
                out_idx.append(i)
                out_val.append(v)

        else:
            raise SchemaError(f"no emitter for family {fam!r}")


def extract(
    state: RollingState,
    next_question: Interaction,
    schema: FeatureSchema,
    hyper: Optional[HyperParams] = None,
    now: Optional[int] = None,
    course_meta: Optional[CourseMeta] = None,
) -> SparseVector:
    """Feature vector for predicting the next question from the current prefix."""
    hyper = hyper or schema.config.hyper
    if hyper.pattern_len != schema.config.hyper.pattern_len or len(hyper.windows) != len(schema.config.hyper.windows):
        raise SchemaError("hyper-parameters disagree with the schema's block sizes")
    if now is None:
        now = next_question.timestamp
    idx: List[int] = []
    val: List[float] = []
    _emit_row(state, next_question, schema, hyper, now, course_meta, idx, val)
    return SparseVector(
        dim=schema.dim,
        indices=np.asarray(idx, dtype=np.int32),
        values=np.asarray(val, dtype=np.float64),
    )


def extract_sequence(
    history: StudentHistory,
    schema: FeatureSchema,
    hyper: Optional[HyperParams] = None,
    course_meta: Optional[CourseMeta] = None,
) -> List[Tuple[SparseVector, int]]:
    """(features, label) pairs for each question interaction of one student.

    Features at step t come from the strict prefix; the label never leaks
    into its own features.
    """
    hyper = hyper or schema.config.hyper
    state = fresh_state(hyper)
    out: List[Tuple[SparseVector, int]] = []
    for x in history.interactions:
        if x.is_question:
            out.append((extract(state, x, schema, hyper, course_meta=course_meta), x.correct))
        update_state(state, x)
    return out
