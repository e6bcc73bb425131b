"""Synthetic multi-course ITS log generator with known ground truth.

The generative model is logistic — correctness probability
guess + (1 - guess - slip) * sigma(ability + skill - difficulty + offsets) —
deliberately neither a BKT nor a plain-IRT process, so no model family under
test is trivially well-specified. Skill grows with practice, decays between
sessions, and a per-session "mood" offset gives recency features signal.
"""

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .domain import (
    ACTIVITY_QUESTION,
    ACTIVITY_READING,
    ACTIVITY_VIDEO,
    DEFAULT_CONTEXT_LABELS,
    CourseMeta,
    Dataset,
    Interaction,
    StudentHistory,
)
from .errors import ConfigError

# Additive performance offset per study-module context.
CONTEXT_EFFECTS = {
    "pre_test": -0.50,
    "effective_learning": 0.00,
    "practice": 0.15,
    "review": 0.35,
    "remediation": 0.05,
    "post_test": -0.25,
}


@dataclass(frozen=True)
class SynthConfig:
    course_count: int = 5
    kc_count: int = 40
    question_count: int = 320
    topic_count: int = 10
    student_count: int = 1000
    correctness_targets: Tuple[float, ...] = (0.713, 0.696, 0.695, 0.687, 0.624)
    ability_std: float = 1.0
    difficulty_std: float = 1.0
    rating_noise: float = 6.0
    learning_rate_range: Tuple[float, float] = (0.10, 0.35)
    guess_floor: float = 0.15
    slip_ceiling: float = 0.05
    session_mood_std: float = 0.45
    forget_rate_per_day: float = 0.10
    multi_kc_rate: float = 0.25
    dropout_rate: float = 0.20
    skip_rate: float = 0.05
    video_boost: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if min(self.course_count, self.kc_count, self.question_count,
               self.topic_count, self.student_count) < 1:
            raise ConfigError("all counts must be positive")
        for p in (self.guess_floor, self.slip_ceiling, self.dropout_rate,
                  self.skip_rate, self.multi_kc_rate):
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"probability {p} outside [0, 1]")
        if len(self.correctness_targets) < self.course_count:
            raise ConfigError("need one correctness target per course")


@dataclass
class CourseTruth:
    """Ground truth behind one generated course (sidecar material)."""

    course_id: str
    question_difficulty: Dict[str, float]
    kc_learning_rate: Dict[str, float]
    intercept: float = 0.0
    abilities: Dict[str, float] = field(default_factory=dict)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def generate_course(config: SynthConfig, course_index: int, seed: int):
    """Generate course content; returns (CourseMeta, CourseTruth).

    Question and KC ids are namespaced by course, so courses are disjoint.
    Expert ratings are an affine map of latent difficulty plus noise, rounded
    into [10, 90]. The prerequisite DAG points from earlier-topic KCs to
    later-topic KCs, hence acyclic.
    """
    rng = np.random.default_rng([seed, 1000 + course_index])
    cid = f"C{course_index}"
    kcs = tuple(f"{cid}_kc{j:03d}" for j in range(config.kc_count))
    kc_topic = {kc: min(j * config.topic_count // config.kc_count,
                        config.topic_count - 1)
                for j, kc in enumerate(kcs)}
    topic_kcs: Dict[int, List[str]] = {}
    for kc, t in kc_topic.items():
        topic_kcs.setdefault(t, []).append(kc)

    questions: Dict[str, Tuple[Tuple[str, ...], int]] = {}
    difficulty: Dict[str, float] = {}
    for j in range(config.question_count):
        qid = f"{cid}_q{j:04d}"
        primary = kcs[j % config.kc_count]
        tags = [primary]
        if rng.random() < config.multi_kc_rate:
            pool = [k for k in topic_kcs[kc_topic[primary]] if k != primary]
            if pool:
                tags.append(pool[int(rng.integers(len(pool)))])
        d = float(rng.normal(0.0, config.difficulty_std))
        difficulty[qid] = d
        rating = 50.0 + 15.0 * d
        if config.rating_noise > 0:
            rating += float(rng.normal(0.0, config.rating_noise))
        rating = int(min(max(round(rating), 10), 90))
        questions[qid] = (tuple(tags), rating)

    edges = []
    for kc in kcs:
        t = kc_topic[kc]
        if t == 0:
            continue
        if rng.random() < 0.6:
            prev = topic_kcs.get(t - 1, [])
            if prev:
                edges.append((prev[int(rng.integers(len(prev)))], kc))

    meta = CourseMeta(
        course_id=cid,
        questions=questions,
        kcs=tuple(sorted(kcs)),
        kc_prereq_edges=tuple(sorted(set(edges))),
        topic_count=config.topic_count,
    )
    rates = {kc: float(rng.uniform(*config.learning_rate_range)) for kc in kcs}
    return meta, CourseTruth(cid, difficulty, rates)


def _kc_topic_of(kc: str, n_kc: int, topic_count: int) -> int:
    j = int(kc.rsplit("kc", 1)[1])
    return min(j * topic_count // n_kc, topic_count - 1)


@dataclass(frozen=True)
class _CoursePlan:
    """Per-course lookup tables shared across simulated students."""

    topic_questions: Dict[int, Tuple[str, ...]]
    topic_kcs: Dict[int, Tuple[str, ...]]

    @classmethod
    def build(cls, meta: CourseMeta) -> "_CoursePlan":
        n_kc = len(meta.kcs)
        t_kcs: Dict[int, List[str]] = {t: [] for t in range(meta.topic_count)}
        for kc in meta.kcs:
            t_kcs[_kc_topic_of(kc, n_kc, meta.topic_count)].append(kc)
        t_qs: Dict[int, List[str]] = {t: [] for t in range(meta.topic_count)}
        for qid in sorted(meta.questions):
            kcs, _ = meta.questions[qid]
            t_qs[_kc_topic_of(kcs[0], n_kc, meta.topic_count)].append(qid)
        return cls(
            topic_questions={t: tuple(v) for t, v in t_qs.items()},
            topic_kcs={t: tuple(v) for t, v in t_kcs.items()},
        )


# Per-topic module schedule: (context, question count range, material events).
_TOPIC_PLAN = (
    ("pre_test", (1, 2), ()),
    ("effective_learning", (2, 4), (ACTIVITY_VIDEO, ACTIVITY_READING)),
    ("practice", (1, 3), ()),
    ("review", (0, 2), ()),
    ("remediation", (0, 2), ()),
    ("post_test", (1, 2), ()),
)


def _simulate_one(
    meta: CourseMeta,
    truth: CourseTruth,
    config: SynthConfig,
    student_id: str,
    rng: np.random.Generator,
    intercept: float,
    plan: _CoursePlan,
    z_sink: Optional[List[float]] = None,
):
    """Simulate one student's trajectory; returns (ability, interactions)."""
    ability = float(rng.normal(0.0, config.ability_std))
    ctx_effect = CONTEXT_EFFECTS
    skills: Dict[str, float] = {}
    attempts: Dict[str, int] = {}

    # Topic walk: occasional skips and revisits; ~dropout_rate of students
    # stop before the last topic.
    topics: List[int] = []
    if rng.random() < config.dropout_rate:
        stop = int(rng.integers(max(1, config.topic_count // 3), config.topic_count))
    else:
        stop = config.topic_count
    for t in range(stop):
        is_last = t == config.topic_count - 1
        if not is_last and stop == config.topic_count and rng.random() < config.skip_rate:
            continue
        topics.append(t)
        if topics and rng.random() < 0.05 and len(topics) > 1:
            topics.append(topics[-2])  # brief revisit of the previous topic

    t_now = 1_600_000_000 + int(rng.integers(0, 90 * 86400))
    interactions: List[Interaction] = []
    prev_ts: Optional[int] = None
    mood = float(rng.normal(0.0, config.session_mood_std))

    def new_session():
        nonlocal t_now, mood
        gap = float(rng.lognormal(mean=10.8, sigma=0.8))  # median ~13.5 h
        days = gap / 86400.0
        decay = math.exp(-config.forget_rate_per_day * days)
        for kc in skills:
            skills[kc] *= decay
        t_now += int(gap)
        mood = float(rng.normal(0.0, config.session_mood_std))

    def emit(x: Interaction):
        nonlocal prev_ts
        interactions.append(x)
        prev_ts = x.timestamp

    for topic in topics:
        if interactions and rng.random() < 0.7:
            new_session()
        pool = plan.topic_questions.get(topic) or tuple(meta.questions)
        for context, (q_lo, q_hi), materials in _TOPIC_PLAN:
            if context == "remediation" and rng.random() < 0.6:
                continue
            for activity in materials:
                dur = int(rng.uniform(60, 600))
                lag = None if prev_ts is None else (t_now - prev_ts) * 1000
                emit(Interaction(
                    student_id=student_id, course_id=meta.course_id,
                    timestamp=t_now, activity=activity, topic_index=topic,
                    context="effective_learning", response_time_ms=dur * 1000,
                    lag_time_ms=lag,
                ))
                t_now += dur + int(rng.uniform(3, 20))
                if activity == ACTIVITY_VIDEO:
                    for kc in plan.topic_kcs.get(topic, ()):
                        skills[kc] = skills.get(kc, 0.0) + config.video_boost
            n_q = int(rng.integers(q_lo, q_hi + 1))
            for _ in range(n_q):
                qid = pool[int(rng.integers(len(pool)))]
                kcs, _rating = meta.questions[qid]
                skill = sum(skills.get(kc, 0.0) for kc in kcs) / len(kcs)
                z_rest = (ability + skill + ctx_effect.get(context, 0.0)
                          + mood - truth.question_difficulty[qid])
                if z_sink is not None:
                    z_sink.append(z_rest)
                z = z_rest + intercept
                p = config.guess_floor + (1.0 - config.guess_floor - config.slip_ceiling) * _sigmoid(z)
                correct = int(rng.random() < p)
                rt = int(1000 * min(max(math.exp(2.8 - 0.35 * z + rng.normal(0.0, 0.4)), 2.0), 300.0))
                lag = None if prev_ts is None else (t_now - prev_ts) * 1000
                emit(Interaction(
                    student_id=student_id, course_id=meta.course_id,
                    timestamp=t_now, activity=ACTIVITY_QUESTION,
                    topic_index=topic, context=context, question_id=qid,
                    kc_ids=kcs, difficulty_rating=meta.questions[qid][1],
                    correct=correct, response_time_ms=rt, lag_time_ms=lag,
                ))
                t_now += rt // 1000 + int(rng.uniform(4, 25))
                for kc in kcs:
                    n_prev = attempts.get(kc, 0)
                    rate = truth.kc_learning_rate[kc]
                    skills[kc] = skills.get(kc, 0.0) + rate * (0.85 ** n_prev)
                    attempts[kc] = n_prev + 1
    return ability, interactions


def _calibrate_intercept(
    meta: CourseMeta, truth: CourseTruth, config: SynthConfig, target: float, seed: int
) -> float:
    """Find the course intercept whose expected correctness hits the target.

    Trajectories do not depend on sampled outcomes, so the pre-intercept
    logits collected from a probe cohort follow the deployment distribution
    and the intercept can be solved by bisection.
    """
    plan = _CoursePlan.build(meta)
    z_values: List[float] = []
    for i in range(80):
        rng = np.random.default_rng([seed, 900_000 + i])
        _simulate_one(meta, truth, config, f"probe{i}", rng, 0.0, plan, z_sink=z_values)
    z = np.asarray(z_values)
    span = 1.0 - config.guess_floor - config.slip_ceiling

    def rate(b: float) -> float:
        return float(np.mean(config.guess_floor + span / (1.0 + np.exp(-(z + b)))))

    lo, hi = -8.0, 8.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if rate(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def simulate_students(
    course_meta: CourseMeta,
    config: SynthConfig,
    n: int,
    seed: int,
    truth: CourseTruth,
) -> Dataset:
    """Simulate n students; deterministic per (seed, student index)."""
    plan = _CoursePlan.build(course_meta)
    histories = {}
    for i in range(n):
        sid = f"{course_meta.course_id}_s{i:05d}"
        rng = np.random.default_rng([seed, i])
        ability, interactions = _simulate_one(
            course_meta, truth, config, sid, rng, truth.intercept, plan
        )
        truth.abilities[sid] = ability
        histories[sid] = StudentHistory(sid, course_meta.course_id, tuple(interactions))
    return Dataset(course_meta.course_id, histories, course_meta)


def generate_transfer_suite(config: SynthConfig, seed: Optional[int] = None):
    """Generate the multi-course suite; returns (datasets, truths).

    Courses share the generative family but have disjoint ids and distinct
    correctness targets, so agnostic transfer is learnable and measurable.
    """
    if seed is None:
        seed = config.seed
    datasets: List[Dataset] = []
    truths: List[CourseTruth] = []
    for ci in range(config.course_count):
        meta, truth = generate_course(config, ci, seed)
        target = config.correctness_targets[ci]
        truth.intercept = _calibrate_intercept(meta, truth, config, target, seed * 1000 + ci)
        data = simulate_students(meta, config, config.student_count, seed * 1000 + ci, truth)
        datasets.append(data)
        truths.append(truth)
    return datasets, truths


def write_ground_truth(truths: Sequence[CourseTruth], path) -> None:
    doc = {
        t.course_id: {
            "intercept": t.intercept,
            "question_difficulty": t.question_difficulty,
            "kc_learning_rate": t.kc_learning_rate,
            "abilities": t.abilities,
        }
        for t in truths
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
