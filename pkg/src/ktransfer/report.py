"""Rendering of experiment outputs: CSV files, aligned text tables, figures."""

import csv
from collections import defaultdict
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .domain import Dataset  # noqa: E402

NAIVE_MODEL_ORDER = (
    "always-correct", "a-bkt", "a-pfa", "a-irt", "a-das3h",
    "a-best-lr", "a-best-lr+", "a-auglr",
)


def write_rows_csv(rows: Sequence[dict], path, columns: Optional[Sequence[str]] = None) -> None:
    """Write experiment rows deterministically (floats via repr, keys sorted)."""
    if not rows:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("")
        return
    if columns is None:
        columns = list(rows[0].keys())

    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return v

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({c: fmt(row.get(c, "")) for c in columns})


def read_rows_csv(path) -> List[dict]:
    out: List[dict] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, val in row.items():
                try:
                    parsed[key] = int(val)
                except (TypeError, ValueError):
                    try:
                        parsed[key] = float(val)
                    except (TypeError, ValueError):
                        parsed[key] = val
            out.append(parsed)
    return out


def _format_table(header: List[str], body: List[List[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    lines = []
    sep = "-+-".join("-" * w for w in widths)
    lines.append(" | ".join(str(h).ljust(w) for h, w in zip(header, widths)))
    lines.append(sep)
    for row in body:
        lines.append(" | ".join(str(c).ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def render_course_summary(datasets: Sequence[Dataset]) -> str:
    """Per-course statistics table (students, content size, responses, rates)."""
    header = ["course"] + [d.course_id for d in datasets]
    rows = [
        ["# of students"] + [str(d.n_students()) for d in datasets],
        ["# of questions"] + [str(len(d.course_meta.questions)) for d in datasets],
        ["# of KCs"] + [str(len(d.course_meta.kcs)) for d in datasets],
        ["# of logs"] + [str(d.n_interactions()) for d in datasets],
        ["# of responses"] + [str(d.n_responses()) for d in datasets],
        ["avg. resp."] + [
            str(round(d.n_responses() / max(d.n_students(), 1))) for d in datasets
        ],
        ["avg. correct"] + [f"{100 * d.correct_rate():.2f}%" for d in datasets],
    ]
    return _format_table(header, rows)


def render_naive_table(rows: Sequence[dict]) -> str:
    """Per-target ACC/AUC grid with an average column (feature-table shape)."""
    targets = sorted({r["target"] for r in rows})
    models = [m for m in NAIVE_MODEL_ORDER if any(r["model"] == m for r in rows)]
    models += sorted({r["model"] for r in rows} - set(models))
    by_key: Dict[tuple, dict] = {(r["model"], r["target"]): r for r in rows}

    header = ["model"]
    for t in targets:
        header += [f"{t} ACC", f"{t} AUC"]
    header += ["avg ACC", "avg AUC"]

    body = []
    for m in models:
        line = [m]
        accs, aucs = [], []
        for t in targets:
            r = by_key.get((m, t))
            if r is None:
                line += ["-", "-"]
                continue
            line += [f"{100 * r['acc']:.2f}", f"{100 * r['auc']:.2f}"]
            accs.append(r["acc"])
            aucs.append(r["auc"])
        line += [
            f"{100 * sum(accs) / len(accs):.2f}" if accs else "-",
            f"{100 * sum(aucs) / len(aucs):.2f}" if aucs else "-",
        ]
        body.append(line)
    return _format_table(header, body)


def render_pairwise_matrix(rows: Sequence[dict], metric: str = "acc") -> str:
    """Source x target matrix; diagonal cells are same-course CV references."""
    courses = sorted({r["target"] for r in rows})
    cell = {(r["train"], r["target"]): r for r in rows}
    header = ["train / test"] + courses
    body = []
    for s in courses:
        line = [s]
        for t in courses:
            r = cell.get((s, t))
            if r is None:
                line.append("-")
            else:
                val = f"{100 * r[metric]:.2f}"
                line.append(f"[{val}]" if s == t else val)
        body.append(line)
    note = "(bracketed diagonal = trained and tested on the same course via CV)\n"
    return _format_table(header, body) + note


def render_cv_table(reports) -> str:
    """Reference-model table: one row per model, mean ACC/AUC over folds."""
    header = ["model", "course", "ACC", "AUC", "ACC var", "AUC var", "n"]
    body = [
        [r.model_name, r.course_id, f"{100 * r.acc:.2f}", f"{100 * r.auc:.2f}",
         f"{100 * r.acc_variance:.4f}", f"{100 * r.auc_variance:.4f}", str(r.n_predictions)]
        for r in reports
    ]
    return _format_table(header, body)


def render_inductive_table(rows: Sequence[dict]) -> str:
    """Mean metric per (model, pilot size) over seeds."""
    sizes = sorted({r["pilot_size"] for r in rows if r["pilot_size"] >= 0})
    models = sorted({r["model"] for r in rows})
    acc: Dict[tuple, List[float]] = defaultdict(list)
    auc_: Dict[tuple, List[float]] = defaultdict(list)
    for r in rows:
        key = (r["model"], r["pilot_size"])
        acc[key].append(r["acc"])
        auc_[key].append(r["auc"])

    header = ["model"] + [f"n={s} ACC/AUC" for s in sizes]
    body = []
    for m in models:
        line = [m]
        for s in sizes:
            key = (m, s if m != "a-auglr" else -1)
            if key not in acc:
                line.append("-")
            else:
                a = 100 * sum(acc[key]) / len(acc[key])
                u = 100 * sum(auc_[key]) / len(auc_[key])
                line.append(f"{a:.2f}/{u:.2f}")
        body.append(line)
    return _format_table(header, body)


def plot_learning_curves(rows: Sequence[dict], out_path_prefix: str) -> List[str]:
    """One line chart per metric: mean over seeds vs pilot size, per model.

    The agnostic reference (pilot_size -1) renders as a dashed horizontal
    line. Returns the written file paths.
    """
    if not rows:
        return []
    target = rows[0]["target"]
    sizes = sorted({r["pilot_size"] for r in rows if r["pilot_size"] >= 0})
    models = sorted({r["model"] for r in rows if r["model"] != "a-auglr"})
    written = []
    for metric in ("acc", "auc"):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for m in models:
            xs, ys = [], []
            for s in sizes:
                vals = [r[metric] for r in rows if r["model"] == m and r["pilot_size"] == s]
                if vals:
                    xs.append(s)
                    ys.append(100 * sum(vals) / len(vals))
            style = {"linewidth": 2.2} if m == "i-auglr" else {}
            ax.plot(xs, ys, marker="o", label=m, **style)
        ref = [r[metric] for r in rows if r["model"] == "a-auglr"]
        if ref:
            ax.axhline(100 * sum(ref) / len(ref), linestyle="--", color="red",
                       label="a-auglr (naive)")
        ax.set_xlabel("pilot students")
        ax.set_ylabel(f"{metric.upper()} (%)")
        ax.set_title(f"{target}: {metric.upper()} vs pilot size")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        path = f"{out_path_prefix}_{metric}.png"
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written
