"""Command-line interface: simulate, validate, train, apply, tune, report.

Every command is driven by one JSON config file; command-line flags override
config keys. Reruns with the same config and seed rewrite byte-identical
outputs. The default output directory comes from KTRANSFER_OUTPUT_DIR.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .domain import Dataset, validate_dataset
from .errors import ConfigError, KtransferError
from .eval import (
    DEFAULT_CONVENTIONAL,
    cross_validate,
    run_inductive_experiment,
    run_naive_transfer_experiment,
)
from .features.schema import HyperParams
from .ingest import load_course_registry, parse_log_csv, write_course_registry, write_log_csv
from .linmodel import TrainConfig
from .report import (
    plot_learning_curves,
    read_rows_csv,
    render_course_summary,
    render_cv_table,
    render_inductive_table,
    render_naive_table,
    render_pairwise_matrix,
    write_rows_csv,
)
from .synth import SynthConfig, generate_transfer_suite, write_ground_truth
from .transfer import (
    DEFAULT_LAMBDA,
    apply_agnostic,
    get_spec,
    load_bundle,
    save_bundle,
    train_agnostic,
)

DEFAULT_MODELS = ("a-bkt", "a-pfa", "a-irt", "a-das3h", "a-best-lr", "a-best-lr+", "a-auglr")


@dataclass
class ExperimentConfig:
    """Everything a run needs; one file, fully seeded."""

    synthetic: Optional[dict] = None  # SynthConfig overrides
    courses: Tuple[dict, ...] = ()  # [{log, questions, prereqs?}, ...]
    models: Tuple[str, ...] = DEFAULT_MODELS
    mode: str = "naive"  # naive | inductive | pairwise | cv-reference
    pilot_sizes: Tuple[int, ...] = (0, 5, 10, 25, 50, 100)
    targets: Tuple[int, ...] = ()  # inductive target course indices; empty = all
    k_folds: int = 5
    lam: float = DEFAULT_LAMBDA
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    seed: int = 0
    epochs: int = 200
    learning_rate: float = 0.001
    batch_size: int = 512
    min_responses: int = 10
    output_dir: str = ""

    @classmethod
    def load(cls, path: Optional[str]) -> "ExperimentConfig":
        doc = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.courses = tuple(cfg.courses)
        cfg.models = tuple(cfg.models)
        cfg.pilot_sizes = tuple(cfg.pilot_sizes)
        cfg.targets = tuple(cfg.targets)
        cfg.seeds = tuple(cfg.seeds)
        return cfg

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate,
                           batch_size=self.batch_size, seed=self.seed)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(**(self.synthetic or {}), seed=self.seed) \
            if "seed" not in (self.synthetic or {}) else SynthConfig(**self.synthetic)

    def out_dir(self) -> Path:
        out = self.output_dir or os.environ.get("KTRANSFER_OUTPUT_DIR", "runs")
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        return path


def _echo_resolved(cfg: ExperimentConfig) -> None:
    """Log the hyper-parameters a run actually used (audit trail)."""
    h = HyperParams()
    print(
        f"resolved: eta={h.eta} pattern_n={h.pattern_len} rpfa_g={h.rpfa_ghosts} "
        f"dF={h.rpfa_decay_failure} dR={h.rpfa_decay_success} "
        f"ppe(c={h.ppe_c},x={h.ppe_x},b={h.ppe_b},m={h.ppe_m}) "
        f"lambda={cfg.lam} epochs={cfg.epochs} lr={cfg.learning_rate} "
        f"batch={cfg.batch_size} seed={cfg.seed}"
    )


def _load_courses(cfg: ExperimentConfig) -> List[Dataset]:
    if cfg.synthetic is not None:
        datasets, _ = generate_transfer_suite(cfg.synth_config(), seed=cfg.seed)
        return datasets
    if not cfg.courses:
        raise ConfigError("config needs either 'synthetic' or 'courses'")
    datasets = []
    for entry in cfg.courses:
        registry = load_course_registry(entry["questions"], entry.get("prereqs"))
        datasets.append(parse_log_csv(entry["log"], registry,
                                      column_map=entry.get("column_map")))
    return datasets


def cmd_simulate(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir()
    scfg = cfg.synth_config()
    datasets, truths = generate_transfer_suite(scfg, seed=cfg.seed)
    metas = [d.course_meta for d in datasets]
    for d in datasets:
        write_log_csv(d, out / f"course_{d.course_id}.csv")
    write_course_registry(metas, out / "questions.csv", out / "prereqs.csv")
    write_ground_truth(truths, out / "ground_truth.json")
    summary = render_course_summary(datasets)
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    print(f"wrote {len(datasets)} course logs to {out}")
    return 0


def cmd_validate(args) -> int:
    registry = load_course_registry(args.questions, args.prereqs)
    dataset = parse_log_csv(args.log, registry)
    violations = validate_dataset(dataset)
    for v in violations:
        print(v)
    print(f"{dataset.course_id}: {dataset.n_students()} students, "
          f"{dataset.n_responses()} responses, {len(violations)} violations")
    return 0 if not violations else 1


def cmd_train(cfg: ExperimentConfig) -> int:
    """Reference-table mode: k-fold CV of each preset on each course."""
    _echo_resolved(cfg)
    out = cfg.out_dir()
    datasets = _load_courses(cfg)
    tc = cfg.train_config()
    reports = []
    rows = []
    for dataset in datasets:
        from .eval import extract_course_design
        from .ingest import filter_min_responses

        data = filter_min_responses(dataset, cfg.min_responses)
        design = extract_course_design(data)
        for name in cfg.models:
            spec = get_spec(name)
            report = cross_validate(data, spec, cfg.k_folds, cfg.seed, tc, design=design)
            reports.append(report)
            rows.append({
                "model": report.model_name, "course": report.course_id,
                "n": report.n_predictions, "acc": report.acc, "auc": report.auc,
                "acc_var": report.acc_variance, "auc_var": report.auc_variance,
            })
            print(f"cv {report.course_id} {report.model_name}: "
                  f"ACC {100 * report.acc:.2f} AUC {100 * report.auc:.2f}")
    write_rows_csv(rows, out / "cv_reference.csv")
    (out / "cv_reference.txt").write_text(render_cv_table(reports), encoding="utf-8")
    return 0


def cmd_apply(cfg: ExperimentConfig, bundle: Optional[str], target: Optional[str],
              save_bundles: bool) -> int:
    _echo_resolved(cfg)
    out = cfg.out_dir()
    datasets = _load_courses(cfg)
    tc = cfg.train_config()

    if bundle:
        model, _lam = load_bundle(bundle)
        wanted = [d for d in datasets if d.course_id == target] if target else datasets
        if not wanted:
            raise ConfigError(f"target course {target!r} not among loaded courses")
        rows = []
        from .eval import accuracy, auc

        for d in wanted:
            preds, labels = apply_agnostic(model, d)
            rows.append({"model": model.spec.name, "train": "+".join(model.source_course_ids),
                         "target": d.course_id, "n": int(labels.shape[0]),
                         "acc": accuracy(preds, labels), "auc": auc(preds, labels)})
        write_rows_csv(rows, out / "naive_transfer.csv")
        (out / "naive_transfer.txt").write_text(render_naive_table(rows), encoding="utf-8")
        print(render_naive_table(rows), end="")
        return 0

    specs = [get_spec(n) for n in cfg.models]
    pairwise = cfg.mode == "pairwise"
    rows = run_naive_transfer_experiment(
        datasets, specs, tc, pairwise=pairwise, min_responses=cfg.min_responses,
        cv_seed=cfg.seed,
    )
    name = "pairwise_transfer" if pairwise else "naive_transfer"
    write_rows_csv(rows, out / f"{name}.csv")
    if pairwise:
        text = (render_pairwise_matrix(rows, "acc") + "\n"
                + render_pairwise_matrix(rows, "auc"))
    else:
        text = render_naive_table(rows)
    (out / f"{name}.txt").write_text(text, encoding="utf-8")
    print(text, end="")

    if save_bundles and not pairwise:
        for ti, d in enumerate(datasets):
            sources = [c for i, c in enumerate(datasets) if i != ti]
            for spec in specs:
                if spec.model_class != "logistic":
                    continue
                model = train_agnostic(sources, spec, tc)
                save_bundle(out / f"bundle_{spec.name}_for_{d.course_id}.json", model, cfg.lam)
    return 0


def cmd_tune(cfg: ExperimentConfig) -> int:
    _echo_resolved(cfg)
    out = cfg.out_dir()
    datasets = _load_courses(cfg)
    tc = cfg.train_config()
    targets = cfg.targets or tuple(range(len(datasets)))
    for ti in targets:
        rows = run_inductive_experiment(
            datasets, ti, cfg.pilot_sizes, cfg.seeds, lam=cfg.lam,
            k=cfg.k_folds, conventional=DEFAULT_CONVENTIONAL,
            train_config=tc, split_seed=cfg.seed, min_responses=cfg.min_responses,
        )
        course = datasets[ti].course_id
        write_rows_csv(rows, out / f"inductive_{course}.csv")
        text = render_inductive_table(rows)
        (out / f"inductive_{course}.txt").write_text(text, encoding="utf-8")
        print(f"== {course}")
        print(text, end="")
    return 0


def cmd_report(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir()
    made = []
    naive = out / "naive_transfer.csv"
    if naive.exists():
        rows = read_rows_csv(naive)
        (out / "naive_transfer.txt").write_text(render_naive_table(rows), encoding="utf-8")
        made.append("naive_transfer.txt")
    pair = out / "pairwise_transfer.csv"
    if pair.exists():
        rows = read_rows_csv(pair)
        text = (render_pairwise_matrix(rows, "acc") + "\n"
                + render_pairwise_matrix(rows, "auc"))
        (out / "pairwise_transfer.txt").write_text(text, encoding="utf-8")
        made.append("pairwise_transfer.txt")
    for path in sorted(out.glob("inductive_*.csv")):
        rows = read_rows_csv(path)
        stem = path.stem
        (out / f"{stem}.txt").write_text(render_inductive_table(rows), encoding="utf-8")
        made.extend(plot_learning_curves(rows, str(out / stem)))
        made.append(f"{stem}.txt")
    if not made:
        print("no experiment outputs found to render", file=sys.stderr)
        return 1
    for m in made:
        print(f"rendered {m}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ktransfer",
        description="Transferable student performance modeling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")

    p = sub.add_parser("simulate", help="generate the synthetic course suite")
    add_common(p)

    p = sub.add_parser("validate", help="validate a log file against its registry")
    p.add_argument("--log", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--prereqs")

    p = sub.add_parser("train", help="cross-validated reference models per course")
    add_common(p)
    p.add_argument("--models", help="comma-separated preset names")
    p.add_argument("--cv", type=int, help="fold count")

    p = sub.add_parser("apply", help="naive transfer (holdout or pairwise)")
    add_common(p)
    p.add_argument("--models", help="comma-separated preset names")
    p.add_argument("--pairwise", action="store_true")
    p.add_argument("--bundle", help="apply a saved transfer bundle instead of training")
    p.add_argument("--target", help="course id to apply the bundle to")
    p.add_argument("--save-bundles", action="store_true")

    p = sub.add_parser("tune", help="inductive transfer learning curves")
    add_common(p)
    p.add_argument("--pilot", help="comma-separated pilot sizes")
    p.add_argument("--lambda", dest="lam", type=float, help="prior penalty")
    p.add_argument("--seeds", help="comma-separated experiment seeds")
    p.add_argument("--targets", help="comma-separated target course indices")

    p = sub.add_parser("report", help="re-render tables and figures from run outputs")
    add_common(p)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "models", None):
        cfg.models = tuple(m.strip() for m in args.models.split(","))
    if getattr(args, "cv", None):
        cfg.k_folds = args.cv
    if getattr(args, "pilot", None):
        cfg.pilot_sizes = tuple(int(s) for s in args.pilot.split(","))
    if getattr(args, "lam", None) is not None:
        cfg.lam = args.lam
    if getattr(args, "seeds", None):
        cfg.seeds = tuple(int(s) for s in args.seeds.split(","))
    if getattr(args, "targets", None):
        cfg.targets = tuple(int(s) for s in args.targets.split(","))
    if getattr(args, "pairwise", False):
        cfg.mode = "pairwise"
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        cfg = _apply_overrides(ExperimentConfig.load(args.config), args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "apply":
            return cmd_apply(cfg, args.bundle, args.target, args.save_bundles)
        if args.command == "tune":
            return cmd_tune(cfg)
        if args.command == "report":
            return cmd_report(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except KtransferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
