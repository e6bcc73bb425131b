"""Scalar feature formulas: count scaling, time windows, R-PFA, PPE, patterns.

These are the building blocks the extractor composes per knowledge component
and sums over a question's KC tags.
"""

import math
from typing import List, Optional, Sequence, Tuple

TIME_CAP_SECONDS = 604800.0  # one week; caps lag/response time before scaling

# Difficulty ratings live in [10, 90]; one-hot buckets sit at multiples of 10.
DIFFICULTY_BUCKETS = 9


def phi(x: float) -> float:
    """Log count scaling log(1 + x); the standard squashing for count features."""
    if x < 0:
        raise ValueError(f"phi is defined for x >= 0, got {x}")
    return math.log1p(x)


def difficulty_bucket(rating: int) -> int:
    """Bucket index 0..8 for a rating: round to the nearest multiple of 10, clamp to [10, 90]."""
    b = int(round(rating / 10.0))
    return min(max(b, 1), 9) - 1


def time_window_counts(
    event_times: Sequence[float],
    event_outcomes: Sequence[int],
    now: float,
    windows: Sequence[float],
) -> List[Tuple[float, float]]:
    """Per-window (phi(attempts), phi(wins)) over one KC's prior attempts.

    A window w counts events with now - t <= w. Windows must be ascending
    (nested), which makes both counts monotone non-decreasing in w; event
    times are ascending, so a single backwards sweep buckets every event.
    """
    nw = len(windows)
    attempts = [0] * nw
    wins = [0] * nw
    k = 0
    for j in range(len(event_times) - 1, -1, -1):
        age = now - event_times[j]
        while k < nw and age > windows[k]:
            k += 1
        if k == nw:
            break
        attempts[k] += 1
        wins[k] += event_outcomes[j]
    out = []
    a = 0
    s = 0
    for k in range(nw):
        a += attempts[k]
        s += wins[k]
        out.append((math.log1p(a), math.log1p(s)))
    return out


def rpfa_features(
    outcomes: Sequence[int],
    decay_failure: float,
    decay_success: float,
    ghost_attempts: int,
) -> Tuple[float, float]:
    """Recency-weighted performance features for one KC.

    Returns (F, R):
      F = sum over prior failures of decay_failure^(age in attempts), age 0
          for the most recent attempt;
      R = weighted mean of outcomes with `ghost_attempts` failures prepended,
          weights decay_success^(age), normalized to sum 1.
    """
    n = len(outcomes)
    failure = 0.0
    for j, y in enumerate(outcomes):
        if y == 0:
            failure += decay_failure ** (n - 1 - j)

    padded_len = n + ghost_attempts
    weight_sum = 0.0
    weighted = 0.0
    for j, y in enumerate(outcomes):
        w = decay_success ** (padded_len - 1 - (ghost_attempts + j))
        weighted += w * y
        weight_sum += w
    for g in range(ghost_attempts):
        weight_sum += decay_success ** (padded_len - 1 - g)
    if weight_sum == 0.0:
        return failure, 0.0
    return failure, weighted / weight_sum


def ppe_feature(
    attempt_times: Sequence[float],
    now: float,
    c: float,
    x: float,
    b: float,
    m: float,
) -> float:
    """Spacing-effect feature c * N^x * T^(-d) from prior attempt times.

    T is the weighted mean elapsed time with weights proportional to
    elapsed^(-x); the decay d = b + m * mean(1 / ln(gap + e)) over consecutive
    attempt gaps (the mean term is 1 when there is a single attempt).
    Elapsed times are floored to one second to keep the weights finite.
    """
    n = len(attempt_times)
    if n == 0:
        return 0.0

    elapsed = [max(now - t, 1.0) for t in attempt_times]
    raw = [e ** (-x) for e in elapsed]
    total = sum(raw)
    t_weighted = sum(w * e for w, e in zip(raw, elapsed)) / total

    if n == 1:
        gap_term = 1.0
    else:
        inv = [1.0 / math.log(attempt_times[k + 1] - attempt_times[k] + math.e)
               for k in range(n - 1)]
        gap_term = sum(inv) / len(inv)
    d = b + m * gap_term
    return c * n ** x * t_weighted ** (-d)


def response_pattern(last_outcomes: Sequence[int], n: int) -> List[float]:
    """2n indicators over the n most recent responses.

    Position i in [1, n] (most recent first) yields a (correct, incorrect)
    indicator pair; positions beyond the observed history stay zero.
    """
    if n < 1:
        raise ValueError("pattern length must be >= 1")
    out = [0.0] * (2 * n)
    m = len(last_outcomes)
    for i in range(1, n + 1):
        if i > m:
            break
        y = last_outcomes[m - i]
        out[2 * (i - 1) + (0 if y == 1 else 1)] = 1.0
    return out


def scaled_time_feature(milliseconds: Optional[int]) -> float:
    """phi of a duration in seconds, capped at one week; absent values map to 0."""
    if milliseconds is None:
        return 0.0
    seconds = min(milliseconds / 1000.0, TIME_CAP_SECONDS)
    return phi(seconds)


def lag_response_time_features(
    prev_response_time_ms: Optional[int],
    lag_time_ms: Optional[int],
) -> Tuple[float, float]:
    """(prior response time, current lag time), each phi(seconds) capped at a week."""
    return scaled_time_feature(prev_response_time_ms), scaled_time_feature(lag_time_ms)


def smoothed_correctness(c_total: int, f_total: int, eta: float, p_bar: float) -> float:
    """Additively smoothed running accuracy (c + eta*p_bar) / (c + f + eta)."""
    return (c_total + eta * p_bar) / (c_total + f_total + eta)
