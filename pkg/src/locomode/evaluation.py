"""Training paradigms, confusion accounting and F1 reporting.

Paradigms, all tested on the PD cohort:

``si1``  train once on every healthy trial, test on each PD subject.
``si2``  leave one PD subject out; train on the remaining PD subjects.
``sd``   within each PD subject, leave one trial out.

Confusion matrices are 6 x 5: true rows RA, RD, SA, SD, LWp, LWf against
predicted columns RA, RD, SA, SD, LW. LWp and LWf count as correct when
predicted LW, and both share the LW column for precision.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    REPORT_NAMES,
    REPORT_ROWS,
    TASK_NAMES,
    Dataset,
    ReportCategory,
    SignalSource,
    TaskCategory,
    fit_normalizer,
    select_source,
    stack_windows,
    trial_windows,
)
from .errors import CohortTooSmall, EmptyInput, LengthMismatch, TrialCountTooSmall
from .features import extract_features_batch
from .lda import DEFAULT_SHRINKAGE, lda_fit, lda_predict
from .lstm import TrainConfig, lstm_init, lstm_predict, lstm_train

log = logging.getLogger(__name__)

PARADIGMS = ("si1", "si2", "sd")
CLASSIFIERS = ("lda", "lstm")
N_ROWS = len(REPORT_ROWS)
N_COLS = len(TaskCategory)
_CORRECT_COLUMN = np.array([0, 1, 2, 3, 4, 4])  # LWp and LWf are correct when predicted LW


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_ROWS, N_COLS):
            raise ValueError(f"confusion counts must be {N_ROWS}x{N_COLS}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @classmethod
    def zeros(cls) -> "ConfusionMatrix":
        return cls(np.zeros((N_ROWS, N_COLS), dtype=np.int64))


@dataclass(frozen=True, eq=False)
class F1Breakdown:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    def as_dict(self) -> dict:
        return {name: float(v) for name, v in zip(REPORT_NAMES, self.f1)}


def build_confusion(truths, preds) -> ConfusionMatrix:
    truths = np.asarray([int(v) for v in truths], dtype=np.int64)
    preds = np.asarray([int(v) for v in preds], dtype=np.int64)
    if truths.shape != preds.shape:
        raise LengthMismatch(f"{truths.size} truths but {preds.size} predictions")
    if truths.size == 0:
        raise EmptyInput("no windows to score")
    if truths.min() < 0 or truths.max() >= N_ROWS:
        raise ValueError(f"truths must be report categories {REPORT_NAMES}")
    if preds.min() < 0 or preds.max() >= N_COLS:
        raise ValueError(f"predictions must be task categories {TASK_NAMES}")
    counts = np.zeros((N_ROWS, N_COLS), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    return ConfusionMatrix(counts)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def f1_breakdown(cm: ConfusionMatrix) -> F1Breakdown:
    counts = cm.counts
    correct = counts[np.arange(N_ROWS), _CORRECT_COLUMN]
    recall = _ratio(correct, counts.sum(axis=1))
    precision = _ratio(correct, counts.sum(axis=0)[_CORRECT_COLUMN])
    f1 = _ratio(2 * precision * recall, precision + recall)
    return F1Breakdown(precision=precision, recall=recall, f1=f1)


def task_f1(cm: ConfusionMatrix) -> np.ndarray:
    """Per-category F1 over the five trained modes, with LWp and LWf merged into LW."""
    counts = np.vstack([cm.counts[:4], cm.counts[4:].sum(axis=0)])
    correct = np.diag(counts)
    recall = _ratio(correct, counts.sum(axis=1))
    precision = _ratio(correct, counts.sum(axis=0))
    return _ratio(2 * precision * recall, precision + recall)


def sample_std(values) -> float:
    """Sample standard deviation; 0 for fewer than two values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1))


# ---------------------------------------------------------------------------
# experiment harness
# ---------------------------------------------------------------------------

@dataclass
class EvalConfig:
    shrinkage: float = DEFAULT_SHRINKAGE
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_dim: int = 100
    seed: int = 0

    def echo(self) -> dict:
        t = self.train
        return {
            "seed": self.seed, "shrinkage": self.shrinkage, "hidden_dim": self.hidden_dim,
            "epochs": t.epochs, "batch_size": t.batch_size, "lr": t.lr, "beta1": t.beta1,
            "beta2": t.beta2, "eps": t.eps, "grad_clip_norm": t.grad_clip_norm,
        }


@dataclass
class Fold:
    fold_id: str
    subject_id: str
    train_trial_ids: tuple
    test_trial_ids: tuple
    train_subjects: tuple
    train_cohorts: tuple
    n_train_windows: int
    confusion: ConfusionMatrix
    model: object = field(default=None, repr=False)

    @property
    def f1(self) -> F1Breakdown:
        return f1_breakdown(self.confusion)


@dataclass
class ParadigmReport:
    paradigm: str
    classifier: str
    source: str
    folds: list
    config: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"{self.paradigm}_{self.classifier}_{self.source}"

    def subject_confusions(self) -> dict:
        """Per-subject confusion (summed over folds for ``sd``), sorted by subject."""
        out: dict = {}
        for fold in self.folds:
            out[fold.subject_id] = out.get(fold.subject_id, ConfusionMatrix.zeros()) + fold.confusion
        return dict(sorted(out.items()))

    def subject_f1(self) -> np.ndarray:
        return np.array([f1_breakdown(cm).f1 for cm in self.subject_confusions().values()])

    @property
    def mean_f1(self) -> np.ndarray:
        return self.subject_f1().mean(axis=0)

    @property
    def std_f1(self) -> np.ndarray:
        per = self.subject_f1()
        return np.array([sample_std(per[:, k]) for k in range(N_ROWS)])

    @property
    def macro_f1(self) -> float:
        """Mean over subjects of the five-mode macro-F1 (see :func:`task_f1`)."""
        return float(np.mean([task_f1(cm).mean() for cm in self.subject_confusions().values()]))

    @property
    def report_macro_f1(self) -> float:
        """Mean of the six per-category means, i.e. the average of one summary-grid row."""
        return float(self.mean_f1.mean())

    @property
    def pooled(self) -> ConfusionMatrix:
        total = ConfusionMatrix.zeros()
        for fold in self.folds:
            total = total + fold.confusion
        return total

    @property
    def pooled_f1(self) -> F1Breakdown:
        return f1_breakdown(self.pooled)


def _scored_windows(trials, source, norm):
    windows = [w for t in trials for w in trial_windows(t, source, norm)]
    return [w for w in windows if w.truth != ReportCategory.LW]


def _fold_seed(seed: int, *parts: int) -> int:
    return int(np.random.SeedSequence([int(seed), *parts]).generate_state(1)[0])


def train_classifier(train_trials, classifier: str, source, config: EvalConfig, seed: int):
    """Fit the normalizer and classifier on ``train_trials``; returns ``(model, norm, n_windows)``."""
    source = SignalSource(source)
    norm = fit_normalizer([select_source(t, source) for t in train_trials])
    windows = [w for t in train_trials for w in trial_windows(t, source, norm)]
    X, _, y = stack_windows(windows)
    if classifier == "lda":
        model = lda_fit(extract_features_batch(X), y, shrinkage=config.shrinkage)
    elif classifier == "lstm":
        init = lstm_init(source.n_channels, config.hidden_dim, len(TaskCategory), seed=seed)
        train_cfg = TrainConfig(**{**config.train.__dict__, "shuffle_seed": seed})
        model, _ = lstm_train(init, X, y, train_cfg)
    else:
        raise ValueError(f"unknown classifier {classifier!r}")
    return model, norm, len(windows)


def predict_windows(model, classifier: str, X) -> np.ndarray:
    if classifier == "lda":
        return np.asarray(lda_predict(model, extract_features_batch(X)))
    return np.asarray(lstm_predict(model, X))


def evaluate(model, norm, classifier: str, source, test_trials) -> ConfusionMatrix:
    windows = _scored_windows(test_trials, source, norm)
    X, truths, _ = stack_windows(windows)
    return build_confusion(truths, predict_windows(model, classifier, X))


def plan_folds(dataset: Dataset, paradigm: str):
    """Yield ``(fold_id, subject_id, train_trials, test_trials)`` in canonical order."""
    pd_subjects = dataset.subjects("pd")
    if paradigm == "si1":
        healthy = dataset.by_cohort("healthy")
        if not healthy or len(pd_subjects) < 2:
            raise CohortTooSmall(
                f"si1 needs >= 1 healthy and >= 2 PD subjects, got {len(dataset.subjects('healthy'))} "
                f"and {len(pd_subjects)}"
            )
        for s in pd_subjects:
            yield s, s, healthy, dataset.trials_of(s)
    elif paradigm == "si2":
        if len(pd_subjects) < 2:
            raise CohortTooSmall(f"si2 needs >= 2 PD subjects, got {len(pd_subjects)}")
        for s in pd_subjects:
            train = [t for other in pd_subjects if other != s for t in dataset.trials_of(other)]
            yield s, s, train, dataset.trials_of(s)
    elif paradigm == "sd":
        if not pd_subjects:
            raise CohortTooSmall("sd needs at least one PD subject")
        for s in pd_subjects:
            trials = dataset.trials_of(s)
            if len(trials) < 2:
                raise TrialCountTooSmall(f"subject {s} has {len(trials)} trial(s), sd needs >= 2")
            for held in trials:
                train = [t for t in trials if t.trial_id != held.trial_id]
                yield f"{s}/{held.trial_id}", s, train, [held]
    else:
        raise ValueError(f"unknown paradigm {paradigm!r}")


def run_paradigm(dataset: Dataset, paradigm: str, classifier: str, source,
                 config: EvalConfig | None = None, keep_models: bool = False) -> ParadigmReport:
    config = config or EvalConfig()
    source = SignalSource(source)
    if classifier not in CLASSIFIERS:
        raise ValueError(f"unknown classifier {classifier!r}")
    folds = []
    shared = None  # si1 trains a single model for every fold
    for k, (fold_id, subject, train, test) in enumerate(plan_folds(dataset, paradigm)):
        seed = _fold_seed(config.seed, PARADIGMS.index(paradigm), list(SignalSource).index(source),
                          0 if paradigm == "si1" else k)
        if paradigm == "si1" and shared is not None:
            model, norm, n_train = shared
        else:
            model, norm, n_train = train_classifier(train, classifier, source, config, seed)
            if paradigm == "si1":
                shared = (model, norm, n_train)
        cm = evaluate(model, norm, classifier, source, test)
        log.info("%s %s %s fold %s: macro-F1 %.3f", paradigm, classifier, source.value, fold_id,
                 f1_breakdown(cm).macro_f1)
        folds.append(Fold(
            fold_id=fold_id, subject_id=subject,
            train_trial_ids=tuple(t.trial_id for t in train),
            test_trial_ids=tuple(t.trial_id for t in test),
            train_subjects=tuple(sorted({t.subject_id for t in train})),
            train_cohorts=tuple(sorted({t.cohort for t in train})),
            n_train_windows=n_train, confusion=cm,
            model=(model, norm) if keep_models else None,
        ))
    return ParadigmReport(paradigm, classifier, source.value, folds, config.echo())


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

REPORT_HEADER = ("paradigm", "classifier", "source", "category", "fold_id", "precision", "recall", "f1")
SUMMARY_FIELDS = ("SUMMARY", "paradigm", "classifier", "source", "category", "mean_f1", "std_f1")
CONFUSION_HEADER = ("paradigm", "classifier", "source", "true_category",
                    *(f"pred_{n}" for n in TASK_NAMES))
FOLD_CONFUSION_HEADER = ("paradigm", "classifier", "source", "fold_id", "subject_id", "true_category",
                         *(f"pred_{n}" for n in TASK_NAMES))
PARADIGM_TITLES = {"si1": "Subject independent I", "si2": "Subject independent II", "sd": "Subject dependent"}


def _f(v: float) -> str:
    return f"{v:.6f}"


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.2f} ({std:.2f})"


def render_csv(report: ParadigmReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    key = (report.paradigm, report.classifier, report.source)
    for fold in report.folds:
        fb = fold.f1
        for k, cat in enumerate(REPORT_NAMES):
            w.writerow((*key, cat, fold.fold_id, _f(fb.precision[k]), _f(fb.recall[k]), _f(fb.f1[k])))
    mean, std = report.mean_f1, report.std_f1
    for k, cat in enumerate(REPORT_NAMES):
        w.writerow(("SUMMARY", *key, cat, _f(mean[k]), _f(std[k])))
    pooled = report.pooled_f1
    for k, cat in enumerate(REPORT_NAMES):
        w.writerow(("POOLED", *key, cat, _f(pooled.precision[k]), _f(pooled.recall[k]), _f(pooled.f1[k])))
    return buf.getvalue()


def render_confusion_csv(report: ParadigmReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONFUSION_HEADER)
    for name, row in zip(REPORT_NAMES, report.pooled.counts):
        w.writerow((report.paradigm, report.classifier, report.source, name, *map(int, row)))
    return buf.getvalue()


def render_fold_confusions_csv(report: ParadigmReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FOLD_CONFUSION_HEADER)
    for fold in report.folds:
        for name, row in zip(REPORT_NAMES, fold.confusion.counts):
            w.writerow((report.paradigm, report.classifier, report.source, fold.fold_id,
                        fold.subject_id, name, *map(int, row)))
    return buf.getvalue()


def read_fold_confusions(text: str) -> list[ParadigmReport]:
    """Rebuild reports (without models or training audit data) from fold-confusion CSV text."""
    reports: dict = {}
    rows = list(csv.DictReader(io.StringIO(text)))
    for r in rows:
        key = (r["paradigm"], r["classifier"], r["source"])
        folds = reports.setdefault(key, {})
        fold = folds.setdefault(r["fold_id"], (r["subject_id"], np.zeros((N_ROWS, N_COLS), dtype=np.int64)))
        row = REPORT_NAMES.index(r["true_category"])
        fold[1][row] = [int(r[f"pred_{n}"]) for n in TASK_NAMES]
    out = []
    for (paradigm, classifier, source), folds in reports.items():
        fold_list = [Fold(fid, subj, (), (), (), (), 0, ConfusionMatrix(counts))
                     for fid, (subj, counts) in folds.items()]
        out.append(ParadigmReport(paradigm, classifier, source, fold_list))
    return out


def render_text(report: ParadigmReport) -> str:
    lines = [f"{PARADIGM_TITLES.get(report.paradigm, report.paradigm)} / "
             f"{report.classifier.upper()} / {report.source}",
             f"folds: {len(report.folds)}  subjects: {len(report.subject_confusions())}",
             "F1 mean (std) across subjects:",
             "  " + "  ".join(f"{n:>11}" for n in REPORT_NAMES),
             "  " + "  ".join(f"{format_cell(m, s):>11}" for m, s in zip(report.mean_f1, report.std_f1)),
             f"  macro-F1 (5 modes) {report.macro_f1:.3f}   row mean (6 categories) "
             f"{report.report_macro_f1:.3f}   pooled row mean {report.pooled_f1.macro_f1:.3f}",
             "pooled confusion (rows true, columns predicted):",
             "        " + "".join(f"{n:>7}" for n in TASK_NAMES)]
    for name, row in zip(REPORT_NAMES, report.pooled.counts):
        lines.append(f"  {name:<6}" + "".join(f"{int(v):>7}" for v in row))
    return "\n".join(lines) + "\n"


def render_report(report: ParadigmReport, fmt: str = "text") -> str:
    if fmt == "text":
        return render_text(report)
    if fmt == "csv":
        return render_csv(report)
    raise ValueError(f"unknown report format {fmt!r}")


def render_summary_grid(reports) -> str:
    """Grid of mean (std) F1, one line per combination."""
    order = {p: i for i, p in enumerate(PARADIGMS)}
    corder = {c: i for i, c in enumerate(CLASSIFIERS)}
    sorder = {s.value: i for i, s in enumerate(SignalSource)}
    reports = sorted(reports, key=lambda r: (order.get(r.paradigm, 9), corder.get(r.classifier, 9),
                                             sorder.get(r.source, 9)))
    head = f"{'paradigm':<9}{'classifier':<11}{'source':<14}" + "".join(f"{n:>13}" for n in REPORT_NAMES)
    lines = [head, "-" * len(head)]
    for r in reports:
        cells = "".join(f"{format_cell(m, s):>13}" for m, s in zip(r.mean_f1, r.std_f1))
        lines.append(f"{r.paradigm:<9}{r.classifier:<11}{r.source:<14}{cells}")
    return "\n".join(lines) + "\n"

