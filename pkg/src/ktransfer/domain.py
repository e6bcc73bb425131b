"""Core immutable data types: interactions, per-student histories, courses.

Everything in this module is a value object: construct once, share freely.
Validation is data, not control flow — `validate_dataset` returns violation
descriptors instead of raising.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

ACTIVITY_QUESTION = "question"
ACTIVITY_VIDEO = "video"
ACTIVITY_READING = "reading"
ACTIVITIES = (ACTIVITY_QUESTION, ACTIVITY_VIDEO, ACTIVITY_READING)

# Default study-module labels. The six categories are configurable; these are
# placeholders chosen for readability, not fixed vocabulary.
DEFAULT_CONTEXT_LABELS = (
    "pre_test",
    "effective_learning",
    "review",
    "practice",
    "remediation",
    "post_test",
)

DIFFICULTY_MIN = 10
DIFFICULTY_MAX = 90


@dataclass(frozen=True, slots=True)
class Interaction:
    """One logged student event: a question attempt or material consumption.

    `kc_ids` keeps the order in which KC tags appeared in the source data
    (deduplicated). Question-only fields (`question_id`, `difficulty_rating`,
    `correct`) are None for video/reading events.
    """

    student_id: str
    course_id: str
    timestamp: int
    activity: str
    topic_index: int
    context: str
    question_id: Optional[str] = None
    kc_ids: Tuple[str, ...] = ()
    difficulty_rating: Optional[int] = None
    correct: Optional[int] = None
    response_time_ms: Optional[int] = None
    lag_time_ms: Optional[int] = None

    @property
    def is_question(self) -> bool:
        return self.activity == ACTIVITY_QUESTION


@dataclass(frozen=True)
class StudentHistory:
    """Time-ordered interaction sequence of one student in one course."""

    student_id: str
    course_id: str
    interactions: Tuple[Interaction, ...]

    def question_count(self) -> int:
        return sum(1 for x in self.interactions if x.is_question)

    def max_topic_index(self) -> int:
        return max((x.topic_index for x in self.interactions), default=-1)


@dataclass(frozen=True)
class CourseMeta:
    """Course content: question-to-KC map, difficulty ratings, prereq graph."""

    course_id: str
    questions: Dict[str, Tuple[Tuple[str, ...], int]]  # qid -> (kc_ids, rating)
    kcs: Tuple[str, ...]
    kc_prereq_edges: Tuple[Tuple[str, str], ...] = ()
    topic_count: int = 1

    @cached_property
    def kc_set(self) -> frozenset:
        return frozenset(self.kcs)

    @cached_property
    def prereqs_of(self) -> Dict[str, Tuple[str, ...]]:
        """Direct prerequisites per KC (edge kc_from -> kc_to reads 'from is required by to')."""
        out: Dict[str, List[str]] = {}
        for src, dst in self.kc_prereq_edges:
            out.setdefault(dst, []).append(src)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def postreqs_of(self) -> Dict[str, Tuple[str, ...]]:
        out: Dict[str, List[str]] = {}
        for src, dst in self.kc_prereq_edges:
            out.setdefault(src, []).append(dst)
        return {k: tuple(v) for k, v in out.items()}


@dataclass(frozen=True)
class Dataset:
    """All histories of one course plus its content metadata."""

    course_id: str
    histories: Dict[str, StudentHistory]
    course_meta: CourseMeta
    context_labels: Tuple[str, ...] = DEFAULT_CONTEXT_LABELS

    def student_ids(self) -> List[str]:
        return sorted(self.histories)

    def n_students(self) -> int:
        return len(self.histories)

    def n_interactions(self) -> int:
        return sum(len(h.interactions) for h in self.histories.values())

    def n_responses(self) -> int:
        return sum(h.question_count() for h in self.histories.values())

    def correct_rate(self) -> float:
        """Fraction of question interactions answered correctly."""
        n = 0
        c = 0
        for h in self.histories.values():
            for x in h.interactions:
                if x.is_question:
                    n += 1
                    c += x.correct
        return c / n if n else 0.0


@dataclass(frozen=True)
class Violation:
    """One broken invariant, addressable enough to locate the offending row."""

    student_id: Optional[str]
    index: Optional[int]
    rule: str
    message: str

    def __str__(self) -> str:
        where = ""
        if self.student_id is not None:
            where = f" student={self.student_id}"
            if self.index is not None:
                where += f" interaction={self.index}"
        return f"[{self.rule}]{where}: {self.message}"


def _check_interaction(x: Interaction, i: int, dataset: Dataset, out: List[Violation]) -> None:
    sid = x.student_id

    def bad(rule, msg):
        out.append(Violation(sid, i, rule, msg))

    if x.activity not in ACTIVITIES:
        bad("activity", f"unknown activity {x.activity!r}")
        return
    if x.context not in dataset.context_labels:
        bad("context-label", f"context {x.context!r} not among configured labels")
    if x.topic_index < 0:
        bad("topic-index", f"topic_index {x.topic_index} is negative")
    if x.response_time_ms is not None and x.response_time_ms < 0:
        bad("response-time", f"response_time_ms {x.response_time_ms} is negative")
    if x.lag_time_ms is not None and x.lag_time_ms < 0:
        bad("lag-time", f"lag_time_ms {x.lag_time_ms} is negative")

    if x.is_question:
        if x.question_id is None:
            bad("question-id", "question interaction lacks question_id")
        elif x.question_id not in dataset.course_meta.questions:
            bad("question-ref", f"question {x.question_id!r} not in course_meta")
        if not x.kc_ids:
            bad("kc-nonempty", "question interaction carries no KC tags")
        else:
            for kc in x.kc_ids:
                if kc not in dataset.course_meta.kc_set:
                    bad("kc-ref", f"KC {kc!r} not in course_meta")
        if x.correct not in (0, 1):
            bad("correct-binary", f"correct must be 0/1, got {x.correct!r}")
        if x.difficulty_rating is None:
            bad("difficulty-present", "question interaction lacks difficulty_rating")
        elif not (DIFFICULTY_MIN <= x.difficulty_rating <= DIFFICULTY_MAX):
            bad(
                "difficulty-range",
                f"difficulty_rating {x.difficulty_rating} outside "
                f"[{DIFFICULTY_MIN}, {DIFFICULTY_MAX}]",
            )
    else:
        if x.correct is not None:
            bad("material-no-correct", "material interaction carries correctness")
        for kc in x.kc_ids:
            if kc not in dataset.course_meta.kc_set:
                bad("kc-ref", f"KC {kc!r} not in course_meta")


def validate_dataset(dataset: Dataset) -> List[Violation]:
    """Check every dataset invariant; returns an empty list iff all hold.

    Pure: repeated calls on the same dataset return identical results.
    """
    out: List[Violation] = []
    meta = dataset.course_meta

    if meta.topic_count < 1:
        out.append(Violation(None, None, "topic-count", "topic_count must be positive"))
    for qid, (kc_ids, _rating) in meta.questions.items():
        if not kc_ids:
            out.append(Violation(None, None, "meta-question-kcs", f"question {qid!r} maps to no KC"))
        for kc in kc_ids:
            if kc not in meta.kc_set:
                out.append(Violation(None, None, "meta-kc-ref", f"question {qid!r} tags unknown KC {kc!r}"))
    for src, dst in meta.kc_prereq_edges:
        if src not in meta.kc_set or dst not in meta.kc_set:
            out.append(Violation(None, None, "prereq-ref", f"prereq edge ({src!r}, {dst!r}) references unknown KC"))

    for sid in sorted(dataset.histories):
        hist = dataset.histories[sid]
        if hist.student_id != sid:
            out.append(Violation(sid, None, "history-key", "histories key does not match student_id"))
        if hist.course_id != dataset.course_id:
            out.append(Violation(sid, None, "course-id", "history course_id differs from dataset"))
        prev_ts = None
        for i, x in enumerate(hist.interactions):
            if x.student_id != hist.student_id:
                out.append(Violation(sid, i, "student-id", "interaction student_id differs from history"))
            if x.course_id != hist.course_id:
                out.append(Violation(sid, i, "course-id", "interaction course_id differs from history"))
            if prev_ts is not None and x.timestamp < prev_ts:
                out.append(Violation(sid, i, "timestamp-order", "timestamps decrease"))
            prev_ts = x.timestamp
            _check_interaction(x, i, dataset, out)
    return out
