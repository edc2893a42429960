"""Trial data model, CSV ingestion, source selection, normalization and windowing.

Channel layout (canonical order, 36 columns)::

    foot_l, foot_r, forearm_l, forearm_r, trunk, pelvis
    each segment: acc_x, acc_y, acc_z, gyr_x, gyr_y, gyr_z

Accelerations are in m/s^2, angular rates in rad/s, sampled at 100 Hz.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import (
    BadLabel,
    ChannelMismatch,
    EmptyInput,
    MissingChannel,
    NonFiniteSample,
    NonMonotonicTime,
    TooShort,
)

SAMPLE_RATE_HZ = 100
WINDOW_FRAMES = 50   # 500 ms
WINDOW_STRIDE = 25   # 250 ms
STD_FLOOR = 1e-8
SIGNAL_DECIMALS = 6  # precision of numeric fields in trial CSVs

SEGMENTS = ("foot_l", "foot_r", "forearm_l", "forearm_r", "trunk", "pelvis")
SENSOR_AXES = ("acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z")
CHANNELS = tuple(f"{seg}_{ax}" for seg in SEGMENTS for ax in SENSOR_AXES)


class TaskCategory(enum.IntEnum):
    """The five modes a classifier is trained on and predicts."""

    RA = 0
    RD = 1
    SA = 2
    SD = 3
    LW = 4


class ReportCategory(enum.IntEnum):
    """Ground-truth categories used when scoring.

    ``LW`` is platform walking that is neither LWp nor LWf; it is trained on
    but has no row in the report confusion matrix.
    """

    RA = 0
    RD = 1
    SA = 2
    SD = 3
    LWp = 4
    LWf = 5
    LW = 6


class SubLabel(enum.IntEnum):
    NONE = 0
    LWp = 1
    LWf = 2


TASK_NAMES = tuple(c.name for c in TaskCategory)
REPORT_ROWS = (ReportCategory.RA, ReportCategory.RD, ReportCategory.SA,
               ReportCategory.SD, ReportCategory.LWp, ReportCategory.LWf)
REPORT_NAMES = tuple(c.name for c in REPORT_ROWS)
_SUBLABEL_BY_NAME = {"": SubLabel.NONE, "LWp": SubLabel.LWp, "LWf": SubLabel.LWf}


def collapse(truth: ReportCategory | int) -> TaskCategory:
    """Map a report category onto the trainable mode it belongs to."""
    truth = ReportCategory(truth)
    if truth <= ReportCategory.SD:
        return TaskCategory(int(truth))
    return TaskCategory.LW


def report_category(label: int, sublabel: int) -> ReportCategory:
    if label != TaskCategory.LW:
        return ReportCategory(int(label))
    if sublabel == SubLabel.LWp:
        return ReportCategory.LWp
    if sublabel == SubLabel.LWf:
        return ReportCategory.LWf
    return ReportCategory.LW


class SignalSource(str, enum.Enum):
    FEET = "feet"
    TRUNK_PELVIS = "trunk_pelvis"
    FOREARMS = "forearms"
    FUSION = "fusion"

    @property
    def segments(self) -> tuple[str, ...]:
        return _SOURCE_SEGMENTS[self]

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(f"{seg}_{ax}" for seg in self.segments for ax in SENSOR_AXES)

    @property
    def channel_indices(self) -> np.ndarray:
        return np.array([CHANNELS.index(name) for name in self.channel_names])

    @property
    def n_channels(self) -> int:
        return 6 * len(self.segments)


_SOURCE_SEGMENTS = {
    SignalSource.FEET: ("foot_l", "foot_r"),
    SignalSource.TRUNK_PELVIS: ("trunk", "pelvis"),
    SignalSource.FOREARMS: ("forearm_l", "forearm_r"),
    SignalSource.FUSION: SEGMENTS,
}


@dataclass(frozen=True, eq=False)
class Trial:
    """One circuit recording.

    ``labels`` holds TaskCategory codes per frame and ``sublabels`` holds
    SubLabel codes (0 when absent).
    """

    subject_id: str
    trial_id: str
    signal: np.ndarray
    labels: np.ndarray
    sublabels: np.ndarray
    cohort: str = "pd"
    leading_leg: str = "left"
    circuit_order: str = "sa_first"
    handrail: bool = False
    sample_rate: int = SAMPLE_RATE_HZ

    def __post_init__(self):
        signal = np.asarray(self.signal, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int8)
        sublabels = np.asarray(self.sublabels, dtype=np.int8)
        if signal.ndim != 2 or signal.shape[1] != len(CHANNELS):
            raise ChannelMismatch(f"signal must be frames x {len(CHANNELS)}, got {signal.shape}")
        n = signal.shape[0]
        if labels.shape != (n,) or sublabels.shape != (n,):
            raise ValueError(
                f"length mismatch: signal={n}, labels={labels.shape}, sublabels={sublabels.shape}"
            )
        if self.sample_rate != SAMPLE_RATE_HZ:
            raise ValueError(f"sample_rate must be {SAMPLE_RATE_HZ} Hz, got {self.sample_rate}")
        if self.cohort not in ("healthy", "pd"):
            raise ValueError(f"cohort must be 'healthy' or 'pd', got {self.cohort!r}")
        bad = np.flatnonzero((labels < 0) | (labels > 4))
        if bad.size:
            raise BadLabel(f"label code {labels[bad[0]]} outside vocabulary at row {bad[0]}")
        bad = np.flatnonzero((sublabels != 0) & (labels != TaskCategory.LW))
        if bad.size:
            raise BadLabel(f"sublabel on a non-LW frame at row {bad[0]}")
        bad = np.flatnonzero((sublabels < 0) | (sublabels > 2))
        if bad.size:
            raise BadLabel(f"sublabel code {sublabels[bad[0]]} outside vocabulary at row {bad[0]}")
        if not np.isfinite(signal).all():
            row, col = np.argwhere(~np.isfinite(signal))[0]
            raise NonFiniteSample(f"non-finite sample in column {CHANNELS[col]} at row {row}")
        signal.setflags(write=False)
        labels.setflags(write=False)
        sublabels.setflags(write=False)
        object.__setattr__(self, "signal", signal)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sublabels", sublabels)

    @property
    def n_frames(self) -> int:
        return self.signal.shape[0]

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.n_frames) / SAMPLE_RATE_HZ


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

def save_trial(trial: Trial, path) -> None:
    """Write ``trial`` in the trial CSV format (six decimals per sample)."""
    header = ["t", *CHANNELS, "label", "sublabel"]
    sub_names = {int(v): k for k, v in _SUBLABEL_BY_NAME.items()}
    values = np.char.mod(f"%.{SIGNAL_DECIMALS}f", trial.signal)
    values = np.where(values == f"-{0:.{SIGNAL_DECIMALS}f}", f"{0:.{SIGNAL_DECIMALS}f}", values)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(trial.n_frames):
            fh.write(
                f"{i / SAMPLE_RATE_HZ:.2f},"
                + ",".join(values[i])
                + f",{TASK_NAMES[trial.labels[i]]},{sub_names[int(trial.sublabels[i])]}\n"
            )


def load_trial(path, *, subject_id: str | None = None, trial_id: str | None = None,
               cohort: str = "pd", leading_leg: str = "left",
               circuit_order: str = "sa_first", handrail: bool = False) -> Trial:
    """Read and validate a trial CSV.

    Channel columns may appear in any order; they are rearranged into the
    canonical layout. Metadata normally comes from the manifest.
    """
    path = Path(path)
    df = pd.read_csv(path, dtype={"label": str, "sublabel": str},
                     keep_default_na=False, na_values=[])
    for col in ("t", *CHANNELS, "label", "sublabel"):
        if col not in df.columns:
            raise MissingChannel(col)

    try:
        t = df["t"].to_numpy(dtype=np.float64)
        signal = df[list(CHANNELS)].to_numpy(dtype=np.float64)
    except ValueError as exc:
        raise NonFiniteSample(f"{path}: unparsable numeric field ({exc})") from None

    if not np.isfinite(t).all():
        raise NonFiniteSample(f"non-finite time at row {int(np.flatnonzero(~np.isfinite(t))[0])}")
    if t.size > 1:
        step = np.diff(t)
        bad = np.flatnonzero(np.abs(step - 1.0 / SAMPLE_RATE_HZ) > 1e-6)
        if bad.size:
            raise NonMonotonicTime(f"time step at row {int(bad[0]) + 1} is {step[bad[0]]:.6g} s, expected 0.01")
    if not np.isfinite(signal).all():
        row, col = np.argwhere(~np.isfinite(signal))[0]
        raise NonFiniteSample(f"non-finite sample in column {CHANNELS[col]} at row {row}")

    label_names = df["label"].to_numpy()
    sub_names = df["sublabel"].to_numpy()
    label_codes = {name: i for i, name in enumerate(TASK_NAMES)}
    labels = np.empty(len(df), dtype=np.int8)
    sublabels = np.empty(len(df), dtype=np.int8)
    for i, (lab, sub) in enumerate(zip(label_names, sub_names)):
        if lab not in label_codes:
            raise BadLabel(f"label {lab!r} outside vocabulary at row {i}")
        if sub not in _SUBLABEL_BY_NAME:
            raise BadLabel(f"sublabel {sub!r} outside vocabulary at row {i}")
        labels[i] = label_codes[lab]
        sublabels[i] = _SUBLABEL_BY_NAME[sub]
        if sublabels[i] and labels[i] != TaskCategory.LW:
            raise BadLabel(f"sublabel {sub} with label {lab} at row {i}")

    return Trial(
        subject_id=subject_id if subject_id is not None else path.stem,
        trial_id=trial_id if trial_id is not None else path.stem,
        signal=signal, labels=labels, sublabels=sublabels, cohort=cohort,
        leading_leg=leading_leg, circuit_order=circuit_order, handrail=handrail,
    )


MANIFEST_FIELDS = ("subject_id", "cohort", "trial_id", "path", "leading_leg",
                   "circuit_order", "handrail")


@dataclass
class ManifestRow:
    subject_id: str
    cohort: str
    trial_id: str
    path: str
    leading_leg: str
    circuit_order: str
    handrail: bool


def write_manifest(rows: Iterable[ManifestRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for r in rows:
            writer.writerow([r.subject_id, r.cohort, r.trial_id, r.path, r.leading_leg,
                             r.circuit_order, "true" if r.handrail else "false"])


def read_manifest(path) -> list[ManifestRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in MANIFEST_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise MissingChannel(missing[0])
        rows = []
        for rec in reader:
            flag = rec["handrail"].strip().lower()
            if flag not in ("true", "false", "1", "0"):
                raise ValueError(f"handrail must be true/false, got {rec['handrail']!r}")
            rows.append(ManifestRow(rec["subject_id"], rec["cohort"], rec["trial_id"], rec["path"],
                                    rec["leading_leg"], rec["circuit_order"],
                                    flag in ("true", "1")))
    return rows


@dataclass
class Dataset:
    """All trials of a cohort study, in manifest order."""

    trials: list[Trial] = field(default_factory=list)

    def subjects(self, cohort: str | None = None) -> list[str]:
        ids = {t.subject_id for t in self.trials if cohort is None or t.cohort == cohort}
        return sorted(ids)

    def trials_of(self, subject_id: str) -> list[Trial]:
        return sorted((t for t in self.trials if t.subject_id == subject_id),
                      key=lambda t: t.trial_id)

    def by_cohort(self, cohort: str) -> list[Trial]:
        return [t for t in self.trials if t.cohort == cohort]


def load_dataset(directory, manifest_name: str = "manifest.csv") -> Dataset:
    directory = Path(directory)
    manifest = directory / manifest_name
    if not manifest.is_file():
        raise FileNotFoundError(f"no manifest at {manifest}")
    trials = []
    for row in read_manifest(manifest):
        trial_path = Path(row.path)
        if not trial_path.is_absolute():
            trial_path = directory / trial_path
        trials.append(load_trial(
            trial_path, subject_id=row.subject_id, trial_id=row.trial_id, cohort=row.cohort,
            leading_leg=row.leading_leg, circuit_order=row.circuit_order, handrail=row.handrail,
        ))
    return Dataset(trials)


# ---------------------------------------------------------------------------
# Source selection and normalization
# ---------------------------------------------------------------------------

def select_source(trial: Trial, source: SignalSource | str) -> np.ndarray:
    source = SignalSource(source)
    return trial.signal[:, source.channel_indices]


@dataclass(frozen=True, eq=False)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @property
    def channel_count(self) -> int:
        return self.mean.shape[0]

    def invert(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(matrix) * self.std + self.mean


def fit_normalizer(matrices: Sequence[np.ndarray]) -> Normalizer:
    """Per-channel z-score statistics over all frames of ``matrices``.

    Uses the population standard deviation, floored at ``STD_FLOOR``.
    """
    mats = [np.asarray(m, dtype=np.float64) for m in matrices]
    if not mats:
        raise EmptyInput("no matrices to fit a normalizer on")
    widths = {m.shape[1] for m in mats}
    if len(widths) > 1:
        raise ChannelMismatch(f"matrices have differing channel counts: {sorted(widths)}")
    stacked = np.concatenate(mats, axis=0)
    if stacked.shape[0] < 2:
        raise EmptyInput(f"need at least 2 frames, got {stacked.shape[0]}")
    mean = stacked.mean(axis=0)
    std = np.sqrt(((stacked - mean) ** 2).mean(axis=0))
    return Normalizer(mean=mean, std=np.maximum(std, STD_FLOOR))


def apply_normalizer(norm: Normalizer, matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[-1] != norm.channel_count:
        raise ChannelMismatch(
            f"normalizer has {norm.channel_count} channels, matrix has {matrix.shape[-1]}"
        )
    return (matrix - norm.mean) / norm.std


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabeledWindow:
    data: np.ndarray
    truth: ReportCategory
    trial_id: str = ""
    subject_id: str = ""
    start_frame: int = 0

    @property
    def train_label(self) -> TaskCategory:
        return collapse(self.truth)


def window_starts(n_frames: int, size: int = WINDOW_FRAMES, stride: int = WINDOW_STRIDE) -> np.ndarray:
    if n_frames < size:
        raise TooShort(f"need at least {size} frames, got {n_frames}")
    return np.arange(0, n_frames - size + 1, stride)


def segment_windows(matrix, labels, sublabels, *, trial_id: str = "",
                    subject_id: str = "") -> list[LabeledWindow]:
    """Cut 50-frame windows at a 25-frame stride.

    A window takes the category of its last frame, so a window straddling a
    transition is attributed to the upcoming mode.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    labels = np.asarray(labels)
    sublabels = np.asarray(sublabels)
    out = []
    for start in window_starts(matrix.shape[0]):
        last = start + WINDOW_FRAMES - 1
        out.append(LabeledWindow(
            data=matrix[start:start + WINDOW_FRAMES],
            truth=report_category(int(labels[last]), int(sublabels[last])),
            trial_id=trial_id, subject_id=subject_id, start_frame=int(start),
        ))
    return out


def trial_windows(trial: Trial, source: SignalSource | str,
                  norm: Normalizer | None = None) -> list[LabeledWindow]:
    matrix = select_source(trial, source)
    if norm is not None:
        matrix = apply_normalizer(norm, matrix)
    return segment_windows(matrix, trial.labels, trial.sublabels,
                           trial_id=trial.trial_id, subject_id=trial.subject_id)


def stack_windows(windows: Sequence[LabeledWindow]):
    """Return ``(X, truths, train_labels)`` arrays for a list of windows."""
    if not windows:
        raise EmptyInput("no windows")
    X = np.stack([w.data for w in windows])
    truths = np.array([int(w.truth) for w in windows], dtype=np.int64)
    train = np.array([int(w.train_label) for w in windows], dtype=np.int64)
    return X, truths, train


def window_count(n_frames: int) -> int:
    return math.floor((n_frames - WINDOW_FRAMES) / WINDOW_STRIDE) + 1


def save_normalizer(norm: Normalizer, path) -> None:
    with open(path, "w") as fh:
        fh.write("LOCOMODE-NORM v1\n")
        fh.write(" ".join(repr(float(v)) for v in norm.mean) + "\n")
        fh.write(" ".join(repr(float(v)) for v in norm.std) + "\n")


def load_normalizer(path) -> Normalizer:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "LOCOMODE-NORM v1" or len(lines) < 3:
        raise ValueError(f"{path}: not a normalizer file")
    return Normalizer(mean=np.array(lines[1].split(), dtype=np.float64),
                      std=np.array(lines[2].split(), dtype=np.float64))
