"""Two-state Bayesian knowledge tracing: forward inference and EM fitting.

State 1 is "mastered" (absorbing; no forgetting), state 0 is "not mastered".
EM runs Baum-Welch vectorized across padded sequences; the identifiability
guard clamps guess/slip during fitting, which preserves the generalized-EM
log-likelihood guarantee because each clamped coordinate update is still the
exact constrained maximizer of its (concave, separable) Q term.
"""

import csv
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .domain import Dataset
from .errors import DataError, ParseError

PROB_FLOOR = 1e-6
GUESS_SLIP_MAX = 0.3  # identifiability guard applied during fitting

DEFAULT_INIT_PARAMS = None  # set after BktParams is defined


@dataclass(frozen=True)
class BktParams:
    """Init/transit/guess/slip probabilities of one skill chain."""

    p_init: float
    p_transit: float
    p_guess: float
    p_slip: float

    def __post_init__(self):
        for name, p in vars(self).items():
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name}={p} outside [0, 1]")

    def clamped(self) -> "BktParams":
        def box(p, hi):
            return min(max(p, PROB_FLOOR), hi)

        return BktParams(
            p_init=box(self.p_init, 1.0 - PROB_FLOOR),
            p_transit=box(self.p_transit, 1.0 - PROB_FLOOR),
            p_guess=box(self.p_guess, GUESS_SLIP_MAX),
            p_slip=box(self.p_slip, GUESS_SLIP_MAX),
        )


DEFAULT_INIT_PARAMS = BktParams(p_init=0.4, p_transit=0.15, p_guess=0.2, p_slip=0.1)


@dataclass(frozen=True)
class BktState:
    """Current mastery belief."""

    p_mastery: float

    def __post_init__(self):
        if not (0.0 <= self.p_mastery <= 1.0):
            raise ValueError(f"p_mastery={self.p_mastery} outside [0, 1]")


def predict_correct(params: BktParams, state: BktState) -> float:
    """P(correct) = L (1 - slip) + (1 - L) guess."""
    return state.p_mastery * (1.0 - params.p_slip) + (1.0 - state.p_mastery) * params.p_guess


def observe(params: BktParams, state: BktState, correct: int) -> BktState:
    """Bayes-update mastery on the observation, then apply the learning transit."""
    l = state.p_mastery
    if correct == 1:
        num = l * (1.0 - params.p_slip)
        den = num + (1.0 - l) * params.p_guess
    else:
        num = l * params.p_slip
        den = num + (1.0 - l) * (1.0 - params.p_guess)
    post = num / den if den > 0 else l
    return BktState(post + (1.0 - post) * params.p_transit)


@dataclass(frozen=True)
class BktFitResult:
    """EM outcome: fitted params plus the per-iteration log-likelihood trace."""

    params: BktParams
    log_likelihoods: Tuple[float, ...]
    n_iters: int
    degenerate: bool


def _pad_sequences(sequences: Sequence[Sequence[int]]):
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    if len(lengths) == 0:
        raise DataError("no sequences to fit")
    if np.any(lengths == 0):
        raise DataError("empty observation sequence")
    t_max = int(lengths.max())
    obs = np.zeros((len(sequences), t_max), dtype=np.int8)
    for i, s in enumerate(sequences):
        obs[i, : len(s)] = s
    return obs, lengths


def _e_step_chunk(obs, lengths, params):
    """Forward-backward over one chunk; returns (stats dict, log-likelihood)."""
    n, t_max = obs.shape
    l0, tr, g, s = params.p_init, params.p_transit, params.p_guess, params.p_slip

    # emission prob b[t][state] for the observed symbol
    obs_f = obs.astype(np.float64)
    b0 = np.where(obs_f == 1.0, g, 1.0 - g)  # state 0: not mastered
    b1 = np.where(obs_f == 1.0, 1.0 - s, s)  # state 1: mastered
    active = np.arange(t_max)[None, :] < lengths[:, None]

    alpha = np.zeros((n, t_max, 2))
    c = np.ones((n, t_max))

    a0 = (1.0 - l0) * b0[:, 0]
    a1 = l0 * b1[:, 0]
    c[:, 0] = a0 + a1
    alpha[:, 0, 0] = a0 / c[:, 0]
    alpha[:, 0, 1] = a1 / c[:, 0]

    for t in range(1, t_max):
        prev0 = alpha[:, t - 1, 0]
        prev1 = alpha[:, t - 1, 1]
        a0 = prev0 * (1.0 - tr) * b0[:, t]
        a1 = (prev0 * tr + prev1) * b1[:, t]
        tot = a0 + a1
        act = active[:, t]
        tot = np.where(act, tot, 1.0)
        c[:, t] = tot
        alpha[:, t, 0] = np.where(act, a0 / tot, alpha[:, t - 1, 0])
        alpha[:, t, 1] = np.where(act, a1 / tot, alpha[:, t - 1, 1])

    ll = float(np.sum(np.log(c[active])))

    # Backward pass, accumulating sufficient statistics without storing beta.
    beta0 = np.ones(n)
    beta1 = np.ones(n)
    stats = {
        "gamma1_first": 0.0,
        "gamma0_all": 0.0, "gamma0_y": 0.0,
        "gamma1_all": 0.0, "gamma1_y0": 0.0,
        "xi01": 0.0, "gamma0_pre": 0.0,
    }
    gamma1_at_start = np.zeros(n)
    for t in range(t_max - 1, -1, -1):
        act = active[:, t]
        gamma0 = alpha[:, t, 0] * beta0
        gamma1 = alpha[:, t, 1] * beta1
        y_t = obs_f[:, t]
        stats["gamma0_all"] += float(np.sum(gamma0[act]))
        stats["gamma0_y"] += float(np.sum((gamma0 * y_t)[act]))
        stats["gamma1_all"] += float(np.sum(gamma1[act]))
        stats["gamma1_y0"] += float(np.sum((gamma1 * (1.0 - y_t))[act]))
        if t == 0:
            gamma1_at_start = gamma1
        # transitions t-1 -> t need beta at t; accumulate before stepping back
        if t > 0:
            pre = active[:, t]  # pair (t-1, t) exists iff t < length
            xi01 = alpha[:, t - 1, 0] * tr * b1[:, t] * beta1 / c[:, t]
            gamma0_prev = alpha[:, t - 1, 0] * (
                (1.0 - tr) * b0[:, t] * beta0 + tr * b1[:, t] * beta1
            ) / c[:, t]
            stats["xi01"] += float(np.sum(xi01[pre]))
            stats["gamma0_pre"] += float(np.sum(gamma0_prev[pre]))
            new_beta0 = ((1.0 - tr) * b0[:, t] * beta0 + tr * b1[:, t] * beta1) / c[:, t]
            new_beta1 = b1[:, t] * beta1 / c[:, t]
            beta0 = np.where(pre, new_beta0, beta0)
            beta1 = np.where(pre, new_beta1, beta1)
    stats["gamma1_first"] = float(np.sum(gamma1_at_start))
    return stats, ll


def _merge_stats(parts: List[dict]) -> dict:
    out = dict(parts[0])
    for p in parts[1:]:
        for k, v in p.items():
            out[k] += v
    return out


def fit_em(
    sequences: Sequence[Sequence[int]],
    init: Optional[BktParams] = None,
    max_iters: int = 100,
    tol: float = 1e-4,
    chunk_size: int = 32768,
) -> BktFitResult:
    """Baum-Welch until the log-likelihood gain drops below tol.

    An infinite tol requests no refinement: the init params come back after
    zero iterations. Degenerate data (all outcomes identical) is fitted to
    the guard boundaries and flagged.
    """
    if init is None:
        init = DEFAULT_INIT_PARAMS
    if math.isinf(tol) and tol > 0:
        return BktFitResult(init, (), 0, False)

    obs, lengths = _pad_sequences(sequences)
    total = int(lengths.sum())
    pos = int(obs.astype(np.int64).sum())  # padding is zeros, so this counts real 1s
    degenerate = pos == 0 or pos == total

    params = init.clamped()
    n_seq = len(lengths)
    lls: List[float] = []
    for it in range(max_iters):
        parts = []
        ll = 0.0
        for lo in range(0, n_seq, chunk_size):
            st, l = _e_step_chunk(obs[lo:lo + chunk_size], lengths[lo:lo + chunk_size], params)
            parts.append(st)
            ll += l
        lls.append(ll)
        if it > 0 and lls[-1] - lls[-2] < tol:
            break
        stats = _merge_stats(parts)
        l0 = stats["gamma1_first"] / n_seq
        tr = stats["xi01"] / stats["gamma0_pre"] if stats["gamma0_pre"] > 0 else params.p_transit
        g = stats["gamma0_y"] / stats["gamma0_all"] if stats["gamma0_all"] > 0 else params.p_guess
        s = stats["gamma1_y0"] / stats["gamma1_all"] if stats["gamma1_all"] > 0 else params.p_slip
        params = BktParams(
            p_init=min(max(l0, 0.0), 1.0),
            p_transit=min(max(tr, 0.0), 1.0),
            p_guess=min(max(g, 0.0), 1.0),
            p_slip=min(max(s, 0.0), 1.0),
        ).clamped()
    return BktFitResult(params, tuple(lls), len(lls), degenerate)


def kc_outcome_sequences(datasets: Iterable[Dataset]) -> List[List[int]]:
    """Per-(student, KC) binary outcome sub-sequences, pooled over datasets."""
    out: List[List[int]] = []
    for dataset in datasets:
        for sid in sorted(dataset.histories):
            per_kc: Dict[str, List[int]] = {}
            for x in dataset.histories[sid].interactions:
                if x.is_question:
                    for kc in x.kc_ids:
                        per_kc.setdefault(kc, []).append(x.correct)
            for kc in sorted(per_kc):
                out.append(per_kc[kc])
    return out


def fit_agnostic_bkt(
    source_datasets: Sequence[Dataset],
    init: Optional[BktParams] = None,
    max_iters: int = 100,
    tol: float = 1e-4,
) -> BktParams:
    """One parameter set fitted on every (student, KC) sub-sequence of the sources."""
    sequences = kc_outcome_sequences(source_datasets)
    if not sequences:
        raise DataError("source datasets contain no question interactions")
    return fit_em(sequences, init=init, max_iters=max_iters, tol=tol).params


def predict_dataset_bkt(params: BktParams, dataset: Dataset):
    """Forward predictions over a dataset with one chain per (student, KC).

    Multi-KC questions predict the mean over tagged chains and update every
    tagged chain. Returns (predictions, labels) aligned with interaction
    order within each student (students visited in sorted order).
    """
    preds: List[float] = []
    labels: List[int] = []
    for sid in sorted(dataset.histories):
        chains: Dict[str, BktState] = {}
        for x in dataset.histories[sid].interactions:
            if not x.is_question:
                continue
            states = [chains.get(kc) or BktState(params.p_init) for kc in x.kc_ids]
            p = sum(predict_correct(params, st) for st in states) / len(states)
            preds.append(p)
            labels.append(x.correct)
            for kc, st in zip(x.kc_ids, states):
                chains[kc] = observe(params, st, x.correct)
    return np.asarray(preds), np.asarray(labels, dtype=np.int8)


@dataclass(frozen=True)
class CourseBkt:
    """Course-specific BKT: independent per-KC params plus a pooled fallback."""

    per_kc: Dict[str, BktParams]
    fallback: BktParams


def fit_course_bkt(
    dataset: Dataset,
    init: Optional[BktParams] = None,
    max_iters: int = 100,
    tol: float = 1e-4,
) -> CourseBkt:
    """Independent EM fit per KC; the pooled fit covers KCs unseen at predict time."""
    per_kc_seqs: Dict[str, List[List[int]]] = {}
    for sid in sorted(dataset.histories):
        buf: Dict[str, List[int]] = {}
        for x in dataset.histories[sid].interactions:
            if x.is_question:
                for kc in x.kc_ids:
                    buf.setdefault(kc, []).append(x.correct)
        for kc, seq in buf.items():
            per_kc_seqs.setdefault(kc, []).append(seq)
    if not per_kc_seqs:
        raise DataError("dataset contains no question interactions")
    pooled = [seq for seqs in per_kc_seqs.values() for seq in seqs]
    fallback = fit_em(pooled, init=init, max_iters=max_iters, tol=tol).params
    per_kc = {
        kc: fit_em(seqs, init=init, max_iters=max_iters, tol=tol).params
        for kc, seqs in sorted(per_kc_seqs.items())
    }
    return CourseBkt(per_kc=per_kc, fallback=fallback)


def predict_course_bkt(model: CourseBkt, dataset: Dataset):
    """Like predict_dataset_bkt but with per-KC parameter sets."""
    preds: List[float] = []
    labels: List[int] = []
    for sid in sorted(dataset.histories):
        chains: Dict[str, BktState] = {}
        for x in dataset.histories[sid].interactions:
            if not x.is_question:
                continue
            ps = []
            for kc in x.kc_ids:
                params = model.per_kc.get(kc, model.fallback)
                st = chains.get(kc) or BktState(params.p_init)
                ps.append(predict_correct(params, st))
            preds.append(sum(ps) / len(ps))
            labels.append(x.correct)
            for kc in x.kc_ids:
                params = model.per_kc.get(kc, model.fallback)
                st = chains.get(kc) or BktState(params.p_init)
                chains[kc] = observe(params, st, x.correct)
    return np.asarray(preds), np.asarray(labels, dtype=np.int8)


def save_bkt_params(path, params_by_kc: Dict[str, BktParams]) -> None:
    """Plain-text parameter file: kc_id,p_init,p_transit,p_guess,p_slip ('*' = agnostic)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kc_id", "p_init", "p_transit", "p_guess", "p_slip"])
        for kc in sorted(params_by_kc):
            p = params_by_kc[kc]
            writer.writerow([kc, repr(p.p_init), repr(p.p_transit), repr(p.p_guess), repr(p.p_slip)])


def load_bkt_params(path) -> Dict[str, BktParams]:
    out: Dict[str, BktParams] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                out[row["kc_id"]] = BktParams(
                    p_init=float(row["p_init"]),
                    p_transit=float(row["p_transit"]),
                    p_guess=float(row["p_guess"]),
                    p_slip=float(row["p_slip"]),
                )
            except (KeyError, ValueError) as exc:
                raise ParseError(f"bad BKT parameter row: {exc}", path=path, line=lineno) from None
    return out
