"""Log-file ingestion: canonical CSV parsing, serialization, filtering, splits.

Canonical interaction-log CSV (UTF-8, header row):

    student_id,course_id,timestamp,activity,question_id,kc_ids,topic_index,
    difficulty,context,correct,response_time_ms,lag_time_ms

`kc_ids` is semicolon-joined; optional fields are empty strings when absent.
Course registry CSV: `question_id,course_id,kc_ids,difficulty`.
Prerequisite CSV: `kc_from,kc_to`.

Real-world exports with different layouts are adapted through `column_map`,
a dict from canonical column name to the name used in the source file.
"""

import csv
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .domain import (
    ACTIVITIES,
    ACTIVITY_QUESTION,
    DEFAULT_CONTEXT_LABELS,
    CourseMeta,
    Dataset,
    Interaction,
    StudentHistory,
)
from .errors import ConfigError, DataError, ParseError, ReferentialError

LOG_COLUMNS = (
    "student_id",
    "course_id",
    "timestamp",
    "activity",
    "question_id",
    "kc_ids",
    "topic_index",
    "difficulty",
    "context",
    "correct",
    "response_time_ms",
    "lag_time_ms",
)

REGISTRY_COLUMNS = ("question_id", "course_id", "kc_ids", "difficulty")
PREREQ_COLUMNS = ("kc_from", "kc_to")


@dataclass(frozen=True)
class FoldAssignment:
    """Student-level fold assignment for k-fold cross-validation."""

    k: int
    assignment: Dict[str, int]

    def fold_students(self, fold: int) -> List[str]:
        return sorted(s for s, f in self.assignment.items() if f == fold)

    def train_students(self, fold: int) -> List[str]:
        return sorted(s for s, f in self.assignment.items() if f != fold)


def _dedupe(items: Iterable[str]) -> Tuple[str, ...]:
    seen = set()
    out = []
    for it in items:
        if it and it not in seen:
            seen.add(it)
            out.append(it)
    return tuple(out)


def load_course_registry(
    questions_path,
    prereqs_path=None,
    kc_separator: str = ";",
) -> Dict[str, dict]:
    """Read question and prerequisite files into a per-course registry.

    Returns {course_id: {"questions": {qid: (kc_ids, difficulty)},
    "prereq_edges": [(kc_from, kc_to), ...]}}.
    """
    registry: Dict[str, dict] = {}
    with open(questions_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(REGISTRY_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"registry missing columns {sorted(missing)}", path=questions_path, line=1)
        for lineno, row in enumerate(reader, start=2):
            qid = row["question_id"].strip()
            course = row["course_id"].strip()
            if not qid or not course:
                raise ParseError("empty question_id or course_id", path=questions_path, line=lineno)
            kcs = _dedupe(k.strip() for k in row["kc_ids"].split(kc_separator))
            if not kcs:
                raise ParseError(f"question {qid!r} has no KC tags", path=questions_path, line=lineno)
            try:
                difficulty = int(row["difficulty"])
            except ValueError:
                raise ParseError(
                    f"difficulty {row['difficulty']!r} is not an integer",
                    path=questions_path, line=lineno, column="difficulty",
                ) from None
            entry = registry.setdefault(course, {"questions": {}, "prereq_edges": []})
            entry["questions"][qid] = (kcs, difficulty)

    if prereqs_path is not None:
        with open(prereqs_path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(PREREQ_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ParseError(f"prereq file missing columns {sorted(missing)}", path=prereqs_path, line=1)
            edges = [(row["kc_from"].strip(), row["kc_to"].strip()) for row in reader]
        # Edges are shared course-agnostically in the file; attach to every course
        # whose KC set contains the endpoints.
        for entry in registry.values():
            known = {kc for kcs, _ in entry["questions"].values() for kc in kcs}
            entry["prereq_edges"] = [e for e in edges if e[0] in known and e[1] in known]
    return registry


def _parse_optional_int(raw: str, name: str, path, lineno: int) -> Optional[int]:
    raw = raw.strip()
    if raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"{name} {raw!r} is not an integer", path=path, line=lineno, column=name) from None


def parse_log_csv(
    path,
    course_registry: Dict[str, dict],
    column_map: Optional[Dict[str, str]] = None,
    kc_separator: str = ";",
    context_labels: Tuple[str, ...] = DEFAULT_CONTEXT_LABELS,
) -> Dataset:
    """Parse one course's interaction log into a validated Dataset.

    Rows are grouped by student and sorted by timestamp; ties keep original
    file order. The file must contain a single course_id known to the
    registry; the course's topic count is the largest topic_index seen + 1.
    """
    colmap = {c: c for c in LOG_COLUMNS}
    if column_map:
        colmap.update(column_map)

    rows: Dict[str, List[Tuple[int, int, Interaction]]] = {}
    course_id = None
    max_topic = 0

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {colmap[c] for c in LOG_COLUMNS} - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"log missing columns {sorted(missing)}", path=path, line=1)

        for lineno, row in enumerate(reader, start=2):
            get = lambda c: row[colmap[c]]
            course = get("course_id").strip()
            if course_id is None:
                course_id = course
                if course_id not in course_registry:
                    raise ReferentialError(f"course {course_id!r} not in registry", path=path, line=lineno)
                questions = course_registry[course_id]["questions"]
            elif course != course_id:
                raise ParseError(
                    f"log mixes courses {course_id!r} and {course!r}; one course per file",
                    path=path, line=lineno,
                )

            activity = get("activity").strip()
            if activity not in ACTIVITIES:
                raise ParseError(f"unknown activity {activity!r}", path=path, line=lineno, column="activity")

            try:
                timestamp = int(get("timestamp"))
                topic_index = int(get("topic_index"))
            except ValueError:
                raise ParseError("timestamp/topic_index not integers", path=path, line=lineno) from None
            if topic_index < 0:
                raise ParseError(f"topic_index {topic_index} negative", path=path, line=lineno, column="topic_index")
            max_topic = max(max_topic, topic_index)

            context = get("context").strip()
            if context not in context_labels:
                raise ParseError(f"unknown context {context!r}", path=path, line=lineno, column="context")

            question_id = get("question_id").strip() or None
            kc_ids = _dedupe(k.strip() for k in get("kc_ids").split(kc_separator))
            difficulty = _parse_optional_int(get("difficulty"), "difficulty", path, lineno)
            correct = _parse_optional_int(get("correct"), "correct", path, lineno)
            response_time = _parse_optional_int(get("response_time_ms"), "response_time_ms", path, lineno)
            lag_time = _parse_optional_int(get("lag_time_ms"), "lag_time_ms", path, lineno)

            if activity == ACTIVITY_QUESTION:
                if question_id is None:
                    raise ParseError("question row lacks question_id", path=path, line=lineno, column="question_id")
                if question_id not in questions:
                    raise ReferentialError(
                        f"question {question_id!r} not in registry for course {course_id!r}",
                        path=path, line=lineno, column="question_id",
                    )
                if correct not in (0, 1):
                    raise ParseError(f"correct must be 0/1, got {correct!r}", path=path, line=lineno, column="correct")
                if not kc_ids:
                    raise ParseError("question row lacks kc_ids", path=path, line=lineno, column="kc_ids")
            elif correct is not None:
                raise ParseError("material row carries correctness", path=path, line=lineno, column="correct")

            x = Interaction(
                student_id=get("student_id").strip(),
                course_id=course_id,
                timestamp=timestamp,
                activity=activity,
                topic_index=topic_index,
                context=context,
                question_id=question_id,
                kc_ids=kc_ids,
                difficulty_rating=difficulty,
                correct=correct,
                response_time_ms=response_time,
                lag_time_ms=lag_time,
            )
            rows.setdefault(x.student_id, []).append((timestamp, lineno, x))

    if course_id is None:
        raise ParseError("log file contains no rows", path=path)

    entry = course_registry[course_id]
    kc_all = sorted({kc for kcs, _ in entry["questions"].values() for kc in kcs})
    meta = CourseMeta(
        course_id=course_id,
        questions=dict(entry["questions"]),
        kcs=tuple(kc_all),
        kc_prereq_edges=tuple(sorted(entry.get("prereq_edges", []))),
        topic_count=max_topic + 1,
    )

    histories = {}
    for sid in sorted(rows):
        ordered = sorted(rows[sid], key=lambda t: (t[0], t[1]))
        histories[sid] = StudentHistory(sid, course_id, tuple(x for _, _, x in ordered))
    return Dataset(course_id, histories, meta, context_labels)


def write_log_csv(dataset: Dataset, path) -> None:
    """Serialize a Dataset to the canonical log CSV (inverse of parse_log_csv)."""

    def fmt(v):
        return "" if v is None else str(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for sid in sorted(dataset.histories):
            for x in dataset.histories[sid].interactions:
                writer.writerow([
                    x.student_id,
                    x.course_id,
                    x.timestamp,
                    x.activity,
                    fmt(x.question_id),
                    ";".join(x.kc_ids),
                    x.topic_index,
                    fmt(x.difficulty_rating),
                    x.context,
                    fmt(x.correct),
                    fmt(x.response_time_ms),
                    fmt(x.lag_time_ms),
                ])


def write_course_registry(metas: Iterable[CourseMeta], questions_path, prereqs_path=None) -> None:
    """Serialize course metadata to the registry (and optional prereq) CSVs."""
    metas = list(metas)
    with open(questions_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REGISTRY_COLUMNS)
        for meta in metas:
            for qid in sorted(meta.questions):
                kcs, difficulty = meta.questions[qid]
                writer.writerow([qid, meta.course_id, ";".join(kcs), difficulty])
    if prereqs_path is not None:
        with open(prereqs_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(PREREQ_COLUMNS)
            for meta in metas:
                for src, dst in sorted(meta.kc_prereq_edges):
                    writer.writerow([src, dst])


def filter_min_responses(dataset: Dataset, min_responses: int = 10) -> Dataset:
    """Drop students with fewer than `min_responses` answered questions.

    Material-only interactions do not count toward the threshold.
    """
    if min_responses < 0:
        raise ConfigError("min_responses must be >= 0")
    kept = {
        sid: hist
        for sid, hist in dataset.histories.items()
        if hist.question_count() >= min_responses
    }
    return Dataset(dataset.course_id, kept, dataset.course_meta, dataset.context_labels)


def split_by_student(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Assign each student to one of k folds; sizes differ by at most one."""
    if k < 2:
        raise ConfigError(f"fold count must be >= 2, got {k}")
    students = dataset.student_ids()
    if len(students) < k:
        raise ConfigError(f"{len(students)} students cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(students))
    assignment = {students[int(p)]: i % k for i, p in enumerate(perm)}
    return FoldAssignment(k, assignment)


def subset_dataset(dataset: Dataset, student_ids: Iterable[str]) -> Dataset:
    """Dataset restricted to the given students (histories shared, not copied)."""
    wanted = set(student_ids)
    missing = wanted - set(dataset.histories)
    if missing:
        raise DataError(f"unknown students {sorted(missing)[:5]}")
    kept = {sid: dataset.histories[sid] for sid in dataset.histories if sid in wanted}
    return Dataset(dataset.course_id, kept, dataset.course_meta, dataset.context_labels)


def eligible_pilot_students(dataset: Dataset) -> List[str]:
    """Students whose history reaches the course's last topic."""
    last = dataset.course_meta.topic_count - 1
    return sorted(
        sid for sid, h in dataset.histories.items() if h.max_topic_index() == last
    )


def sample_pilot_students(train_dataset: Dataset, n: int, seed: int) -> Dataset:
    """Uniformly sample n pilot students among those who reached the last topic."""
    if n < 0:
        raise ConfigError("pilot size must be >= 0")
    eligible = eligible_pilot_students(train_dataset)
    if n > len(eligible):
        raise DataError(f"requested {n} pilot students but only {len(eligible)} reached the last topic")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(eligible), size=n, replace=False) if n else []
    return subset_dataset(train_dataset, [eligible[int(i)] for i in chosen])
