"""Command line entry point: ``locomode generate|run|report|inspect``."""

from __future__ import annotations

import argparse
import functools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import REPORT_NAMES, SignalSource, load_dataset, save_normalizer, trial_windows
from .errors import ConfigTypeError, LocomodeError, MissingRequired, UnknownKey
from .evaluation import (
    CLASSIFIERS,
    PARADIGMS,
    EvalConfig,
    ParadigmReport,
    read_fold_confusions,
    render_confusion_csv,
    render_csv,
    render_fold_confusions_csv,
    render_summary_grid,
    render_text,
    run_paradigm,
)
from .lda import DEFAULT_SHRINKAGE, save_lda
from .lstm import TrainConfig, save_lstm
from .synthgen import SynthConfig, synth_dataset

log = logging.getLogger("locomode")

SOURCES = tuple(s.value for s in SignalSource)


@dataclass
class ExperimentConfig:
    dataset_dir: Path
    output_dir: Path
    master_seed: int
    paradigms: tuple = PARADIGMS
    classifiers: tuple = CLASSIFIERS
    sources: tuple = SOURCES
    train: TrainConfig = field(default_factory=TrainConfig)
    shrinkage: float = DEFAULT_SHRINKAGE
    hidden_dim: int = 100

    def eval_config(self) -> EvalConfig:
        return EvalConfig(shrinkage=self.shrinkage, train=self.train, hidden_dim=self.hidden_dim,
                          seed=self.master_seed)


_REQUIRED = ("dataset_dir", "output_dir", "master_seed")
_TRAIN_KEYS = {"epochs": int, "batch_size": int, "lr": float, "beta1": float, "beta2": float,
               "eps": float, "grad_clip_norm": float}
_LIST_KEYS = {"paradigms": PARADIGMS, "classifiers": CLASSIFIERS, "sources": SOURCES}
_KNOWN = set(_REQUIRED) | set(_TRAIN_KEYS) | set(_LIST_KEYS) | {"shrinkage", "hidden_dim"}


def _convert(key, raw, kind):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigTypeError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigTypeError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN:
            raise UnknownKey(key)
        values[key] = raw
    for key in _REQUIRED:
        if key not in values:
            raise MissingRequired(key)

    kwargs = {
        "dataset_dir": Path(values["dataset_dir"]),
        "output_dir": Path(values["output_dir"]),
        "master_seed": _convert("master_seed", values["master_seed"], int),
    }
    for key, allowed in _LIST_KEYS.items():
        if key in values:
            items = tuple(v.strip() for v in values[key].split(",") if v.strip())
            if not items:
                raise ConfigTypeError(f"{key}: must name at least one of {', '.join(allowed)}")
            bad = [v for v in items if v not in allowed]
            if bad:
                raise ConfigTypeError(f"{key}: unknown value {bad[0]!r}; choose from {', '.join(allowed)}")
            kwargs[key] = tuple(v for v in allowed if v in items)
    train = {k: _convert(k, values[k], kind) for k, kind in _TRAIN_KEYS.items() if k in values}
    try:
        kwargs["train"] = TrainConfig(**train)
    except ValueError as exc:
        raise ConfigTypeError(str(exc)) from None
    if "shrinkage" in values:
        kwargs["shrinkage"] = _convert("shrinkage", values["shrinkage"], float)
        if kwargs["shrinkage"] < 0:
            raise ConfigTypeError(f"shrinkage must be >= 0, got {kwargs['shrinkage']}")
    if "hidden_dim" in values:
        kwargs["hidden_dim"] = _convert("hidden_dim", values["hidden_dim"], int)
        if kwargs["hidden_dim"] < 1:
            raise ConfigTypeError(f"hidden_dim must be >= 1, got {kwargs['hidden_dim']}")
    return ExperimentConfig(**kwargs)


def parse_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=2)
def _dataset(path: str):
    return load_dataset(path)


def _safe(fold_id: str) -> str:
    return fold_id.replace("/", "__")


def write_report_files(report: ParadigmReport, out_dir: Path) -> None:
    reports = out_dir / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    (reports / f"{report.name}_report.csv").write_text(render_csv(report))
    (reports / f"{report.name}_confusion.csv").write_text(render_confusion_csv(report))
    (reports / f"{report.name}_folds.csv").write_text(render_fold_confusions_csv(report))
    echo = "".join(f"{k} = {v}\n" for k, v in report.config.items())
    (reports / f"{report.name}.txt").write_text(render_text(report) + "config:\n" + echo)


def write_models(report: ParadigmReport, out_dir: Path) -> None:
    model_dir = out_dir / "models" / report.name
    model_dir.mkdir(parents=True, exist_ok=True)
    written = set()
    for fold in report.folds:
        model, norm = fold.model
        stem = "healthy" if report.paradigm == "si1" else _safe(fold.fold_id)
        if stem in written:
            continue
        written.add(stem)
        if report.classifier == "lda":
            save_lda(model, model_dir / f"{stem}.lda")
        else:
            save_lstm(model, model_dir / f"{stem}.lstm")
        save_normalizer(norm, model_dir / f"{stem}.norm")


def _run_combination(dataset_dir: str, out_dir: str, combo, eval_cfg: EvalConfig):
    paradigm, classifier, source = combo
    report = run_paradigm(_dataset(dataset_dir), paradigm, classifier, source, eval_cfg, keep_models=True)
    write_report_files(report, Path(out_dir))
    write_models(report, Path(out_dir))
    for fold in report.folds:
        fold.model = None  # keep the pickled result small
    return report


def run(config: ExperimentConfig, jobs: int = 1) -> int:
    if not config.dataset_dir.is_dir():
        print(f"error: dataset directory not found: {config.dataset_dir}", file=sys.stderr)
        return 2
    try:
        _dataset(str(config.dataset_dir))
    except (LocomodeError, OSError, ValueError) as exc:
        print(f"error: cannot load dataset {config.dataset_dir}: {exc}", file=sys.stderr)
        return 2
    config.output_dir.mkdir(parents=True, exist_ok=True)
    combos = [(p, c, s) for p in config.paradigms for c in config.classifiers for s in config.sources]
    eval_cfg = config.eval_config()
    args = (str(config.dataset_dir), str(config.output_dir))
    reports, failures = [], []

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_combination, *args, combo, eval_cfg) for combo in combos]
            outcomes = []
            for combo, fut in zip(combos, futures):
                try:
                    outcomes.append((combo, fut.result(), None))
                except Exception as exc:  # noqa: BLE001 - reported per combination
                    outcomes.append((combo, None, exc))
    else:
        outcomes = []
        for combo in combos:
            try:
                outcomes.append((combo, _run_combination(*args, combo, eval_cfg), None))
            except Exception as exc:  # noqa: BLE001 - reported per combination
                outcomes.append((combo, None, exc))

    for combo, report, exc in outcomes:
        if exc is not None:
            failures.append(combo)
            print(f"error: {'/'.join(combo)} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        else:
            reports.append(report)
    if reports:
        grid = render_summary_grid(reports)
        (config.output_dir / "summary.txt").write_text(grid)
        print(grid, end="")
    return 1 if failures else 0


def report_from_dir(out_dir: Path) -> int:
    files = sorted((out_dir / "reports").glob("*_folds.csv"))
    if not files:
        print(f"error: no *_folds.csv files under {out_dir / 'reports'}", file=sys.stderr)
        return 2
    reports = []
    for path in files:
        for report in read_fold_confusions(path.read_text()):
            reports.append(report)
            print(render_text(report))
    print(render_summary_grid(reports), end="")
    return 0


def inspect_dataset(path: Path) -> int:
    try:
        dataset = load_dataset(path)
    except (LocomodeError, OSError, ValueError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return 2
    print(f"dataset {path}: {len(dataset.trials)} trials")
    for cohort in ("healthy", "pd"):
        subjects = dataset.subjects(cohort)
        print(f"  {cohort}: {len(subjects)} subjects {', '.join(subjects)}")
    counts = np.zeros(len(REPORT_NAMES) + 1, dtype=int)
    for trial in dataset.trials:
        for w in trial_windows(trial, SignalSource.FEET):
            counts[int(w.truth)] += 1
    print("  windows per category: " + ", ".join(
        f"{n}={c}" for n, c in zip((*REPORT_NAMES, "LW(platform)"), counts)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locomode", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic cohort")
    gen.add_argument("--subjects-healthy", type=int, default=5)
    gen.add_argument("--subjects-pd", type=int, default=5)
    gen.add_argument("--trials-per-subject", type=int, default=10)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)

    run_p = sub.add_parser("run", help="train and evaluate every configured combination")
    run_p.add_argument("--config", type=Path, required=True)
    run_p.add_argument("--jobs", type=int, default=1)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", type=Path)

    rep = sub.add_parser("report", help="re-render stored fold results")
    rep.add_argument("--config", type=Path)
    rep.add_argument("--out", type=Path)

    ins = sub.add_parser("inspect", help="validate a dataset and summarise it")
    ins.add_argument("dataset", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            cfg = SynthConfig(args.subjects_healthy, args.subjects_pd, args.trials_per_subject, args.seed)
            ds = synth_dataset(cfg, args.out)
            print(f"wrote {len(ds.trials)} trials to {args.out}")
            return 0
        if args.command == "run":
            config = parse_config(args.config)
            if args.seed is not None:
                config.master_seed = args.seed
            if args.out is not None:
                config.output_dir = args.out
            if args.jobs < 1:
                raise ConfigTypeError(f"--jobs must be >= 1, got {args.jobs}")
            return run(config, jobs=args.jobs)
        if args.command == "report":
            if args.out is None and args.config is None:
                raise ConfigTypeError("report needs --out or --config")
            out = args.out if args.out is not None else parse_config(args.config).output_dir
            return report_from_dir(out)
        if args.command == "inspect":
            return inspect_dataset(args.dataset)
    except (LocomodeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
