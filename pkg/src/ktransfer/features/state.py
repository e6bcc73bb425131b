"""Per-student rolling summary of the interaction prefix.

State after t updates is a pure function of the first t interactions.
`update_state` mutates in place and returns the same object; copy() gives a
snapshot when a caller needs to branch.
"""

from collections import deque
from typing import Dict, List, Optional

from ..domain import ACTIVITY_READING, ACTIVITY_VIDEO, Interaction
from ..errors import SequencingError
from .families import difficulty_bucket


class RollingState:
    """Counters and event lists feeding every feature family.

    `prev_response_time_ms` tracks the most recent question's solve time
    (the SAINT+ "prior response time"); material events do not overwrite it.
    """

    __slots__ = (
        "c_total", "f_total",
        "kc_correct", "kc_wrong",
        "kc_times", "kc_outcomes",
        "bucket_correct", "bucket_wrong",
        "context_correct", "context_wrong",
        "recent",
        "video_count", "reading_count",
        "prev_response_time_ms", "last_timestamp",
    )

    def __init__(self, pattern_len: int = 10):
        self.c_total = 0
        self.f_total = 0
        self.kc_correct: Dict[str, int] = {}
        self.kc_wrong: Dict[str, int] = {}
        self.kc_times: Dict[str, List[int]] = {}
        self.kc_outcomes: Dict[str, List[int]] = {}
        self.bucket_correct: Dict[int, int] = {}
        self.bucket_wrong: Dict[int, int] = {}
        self.context_correct: Dict[str, int] = {}
        self.context_wrong: Dict[str, int] = {}
        self.recent = deque(maxlen=pattern_len)
        self.video_count = 0
        self.reading_count = 0
        self.prev_response_time_ms: Optional[int] = None
        self.last_timestamp: Optional[int] = None

    def copy(self) -> "RollingState":
        out = RollingState(self.recent.maxlen)
        out.c_total = self.c_total
        out.f_total = self.f_total
        out.kc_correct = dict(self.kc_correct)
        out.kc_wrong = dict(self.kc_wrong)
        out.kc_times = {k: list(v) for k, v in self.kc_times.items()}
        out.kc_outcomes = {k: list(v) for k, v in self.kc_outcomes.items()}
        out.bucket_correct = dict(self.bucket_correct)
        out.bucket_wrong = dict(self.bucket_wrong)
        out.context_correct = dict(self.context_correct)
        out.context_wrong = dict(self.context_wrong)
        out.recent = deque(self.recent, maxlen=self.recent.maxlen)
        out.video_count = self.video_count
        out.reading_count = self.reading_count
        out.prev_response_time_ms = self.prev_response_time_ms
        out.last_timestamp = self.last_timestamp
        return out


def update_state(state: RollingState, x: Interaction) -> RollingState:
    """Fold one interaction into the rolling state (mutating; returns state)."""
    if state.last_timestamp is not None and x.timestamp < state.last_timestamp:
        raise SequencingError(
            f"interaction at {x.timestamp} precedes last seen {state.last_timestamp}"
        )
    state.last_timestamp = x.timestamp

    if x.is_question:
        y = x.correct
        if y == 1:
            state.c_total += 1
        else:
            state.f_total += 1
        for kc in x.kc_ids:
            if y == 1:
                state.kc_correct[kc] = state.kc_correct.get(kc, 0) + 1
            else:
                state.kc_wrong[kc] = state.kc_wrong.get(kc, 0) + 1
            state.kc_times.setdefault(kc, []).append(x.timestamp)
            state.kc_outcomes.setdefault(kc, []).append(y)
        if x.difficulty_rating is not None:
            b = difficulty_bucket(x.difficulty_rating)
            if y == 1:
                state.bucket_correct[b] = state.bucket_correct.get(b, 0) + 1
            else:
                state.bucket_wrong[b] = state.bucket_wrong.get(b, 0) + 1
        if y == 1:
            state.context_correct[x.context] = state.context_correct.get(x.context, 0) + 1
        else:
            state.context_wrong[x.context] = state.context_wrong.get(x.context, 0) + 1
        state.recent.append(y)
        state.prev_response_time_ms = x.response_time_ms
    elif x.activity == ACTIVITY_VIDEO:
        state.video_count += 1
    elif x.activity == ACTIVITY_READING:
        state.reading_count += 1
    return state
