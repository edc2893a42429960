"""Deterministic synthetic terrain-park cohort.

Each channel is a sum of three gait harmonics whose amplitudes depend on the
locomotion mode, plus (for the PD cohort) a 4-6 Hz tremor on forearm and foot
accelerometers and a little white noise. Subjects differ by per-channel gains,
cadence and channel phases, which is what makes cross-subject training harder
than within-subject training.

All constants live in this module; bump ``GENERATOR_VERSION`` when any of
them change.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .corpus import (
    CHANNELS,
    SAMPLE_RATE_HZ,
    SIGNAL_DECIMALS,
    Dataset,
    ManifestRow,
    SubLabel,
    TaskCategory,
    Trial,
    save_trial,
    write_manifest,
)
from .errors import BadCircuit, IoFailure

GENERATOR_VERSION = 1

N_HARMONICS = 3
NOISE_SIGMA = 0.05
GAIN_LOG_SIGMA = 0.15
TRIAL_GAIN_LOG_SIGMA = 0.03
CADENCE_BASELINE = {"healthy": 0.9, "pd": 0.75}  # strides per second
CADENCE_SPREAD = 0.10
TREMOR_AMPLITUDE_RANGE = (0.3, 0.8)  # m/s^2
TREMOR_FREQUENCY_RANGE = (4.0, 6.0)  # Hz
TOE_OFF_LEAD_S = 0.2
CROSSFADE_S = 0.15
MIN_SEGMENT_S = 1.0
HANDRAIL_FOREARM_SCALE = 0.5
PHASE_JITTER_SIGMA = 0.5  # rad; inter-segment timing is similar across people

# stride frequency of each mode relative to level walking
MODE_FUNDAMENTAL = {
    TaskCategory.RA: 0.85,
    TaskCategory.RD: 1.10,
    TaskCategory.SA: 0.75,
    TaskCategory.SD: 0.95,
    TaskCategory.LW: 1.00,
}

# typical first-harmonic amplitude per segment: (accelerometer m/s^2, gyroscope rad/s)
SEGMENT_SCALE = {
    "foot_l": (8.0, 4.0),
    "foot_r": (8.0, 4.0),
    "forearm_l": (3.0, 1.5),
    "forearm_r": (3.0, 1.5),
    "trunk": (2.0, 0.8),
    "pelvis": (2.0, 0.8),
}
HARMONIC_DECAY = (1.0, 0.5, 0.25)
# spread of per-mode amplitude multipliers; arm swing changes least across terrain
MODE_MULTIPLIER_RANGE = {
    "foot_l": (0.5, 1.5),
    "foot_r": (0.5, 1.5),
    "forearm_l": (0.8, 1.2),
    "forearm_r": (0.8, 1.2),
    "trunk": (0.5, 1.5),
    "pelvis": (0.5, 1.5),
}
TABLE_SEED = 20210  # seeds the fixed harmonic tables, not any subject


def _harmonic_tables():
    rng = np.random.default_rng(TABLE_SEED)
    segs = [ch.rsplit("_", 2)[0] for ch in CHANNELS]
    base = np.array([SEGMENT_SCALE[s][0 if "_acc_" in ch else 1] for s, ch in zip(segs, CHANNELS)])
    lo = np.array([MODE_MULTIPLIER_RANGE[s][0] for s in segs])[:, None]
    hi = np.array([MODE_MULTIPLIER_RANGE[s][1] for s in segs])[:, None]
    amp = np.empty((len(TaskCategory), len(CHANNELS), N_HARMONICS))
    phase = np.empty_like(amp)
    for m in TaskCategory:
        mult = lo + (hi - lo) * rng.random(size=(len(CHANNELS), N_HARMONICS))
        amp[m] = base[:, None] * np.array(HARMONIC_DECAY)[None, :] * mult
        phase[m] = rng.uniform(0.0, 2 * np.pi, size=(len(CHANNELS), N_HARMONICS))
    return amp, phase


HARMONIC_AMPLITUDE, HARMONIC_PHASE = _harmonic_tables()

_ACC = np.array(["_acc_" in ch for ch in CHANNELS])
_FOREARM = np.array([ch.startswith("forearm") for ch in CHANNELS])
_FOOT = np.array([ch.startswith("foot") for ch in CHANNELS])
TREMOR_MASK = _ACC & (_FOREARM | _FOOT)


@dataclass(frozen=True, eq=False)
class SubjectProfile:
    subject_id: str
    cohort: str
    gains: np.ndarray
    cadence: float
    tremor_amplitude: float
    tremor_frequency: float
    phases: np.ndarray
    rng_seed: int


def _cohort_code(cohort: str) -> int:
    if cohort not in CADENCE_BASELINE:
        raise ValueError(f"cohort must be one of {sorted(CADENCE_BASELINE)}, got {cohort!r}")
    return 0 if cohort == "healthy" else 1


def make_subject(cohort: str, index: int, master_seed: int) -> SubjectProfile:
    if index < 0:
        raise ValueError(f"index must be >= 0, got {index}")
    code = _cohort_code(cohort)
    seq = np.random.SeedSequence([int(master_seed), code, int(index)])
    rng = np.random.default_rng(seq)
    gains = np.exp(rng.normal(0.0, GAIN_LOG_SIGMA, size=len(CHANNELS)))
    cadence = CADENCE_BASELINE[cohort] * rng.uniform(1 - CADENCE_SPREAD, 1 + CADENCE_SPREAD)
    phases = rng.normal(0.0, PHASE_JITTER_SIGMA, size=len(CHANNELS))
    if cohort == "pd":
        tremor_amp = rng.uniform(*TREMOR_AMPLITUDE_RANGE)
        tremor_freq = rng.uniform(*TREMOR_FREQUENCY_RANGE)
    else:
        tremor_amp, tremor_freq = 0.0, 0.0
    prefix = "H" if cohort == "healthy" else "P"
    return SubjectProfile(
        subject_id=f"{prefix}{index + 1:02d}", cohort=cohort, gains=gains, cadence=float(cadence),
        tremor_amplitude=float(tremor_amp), tremor_frequency=float(tremor_freq), phases=phases,
        rng_seed=int(seq.generate_state(1)[0]),
    )


class Segment(enum.Enum):
    WALKWAY_BEFORE = "walkway_before"
    STAIR = "stair"
    PLATFORM = "platform"
    RAMP = "ramp"
    WALKWAY_AFTER = "walkway_after"


@dataclass(frozen=True)
class CircuitSpec:
    """Ordered circuit segments as ``(segment, mode, sublabel, duration_s)``.

    ``order`` is ``sa_first`` (stair ascent, then ramp descent) or
    ``ra_first`` (ramp ascent, then stair descent); ``direction`` records
    whether the course was walked A to B (forward) or B to A (reverse).
    """

    segments: tuple
    order: str = "sa_first"
    direction: str = "forward"

    def validate(self) -> None:
        if self.order not in ("sa_first", "ra_first"):
            raise BadCircuit(f"unknown circuit order {self.order!r}")
        if self.direction not in ("forward", "reverse"):
            raise BadCircuit(f"unknown direction {self.direction!r}")
        kinds = [s[0] for s in self.segments]
        if kinds.count(Segment.STAIR) != 1 or kinds.count(Segment.RAMP) != 1:
            raise BadCircuit("a circuit needs exactly one stair and one ramp segment")
        stair, ramp = kinds.index(Segment.STAIR), kinds.index(Segment.RAMP)
        lo, hi = sorted((stair, ramp))
        if Segment.PLATFORM not in kinds[lo + 1:hi]:
            raise BadCircuit("the platform must lie between the stair and the ramp")
        for kind, _, _, duration in self.segments:
            if duration < MIN_SEGMENT_S:
                raise BadCircuit(f"segment {kind.value} lasts {duration:.2f} s, minimum is {MIN_SEGMENT_S} s")

    @property
    def duration(self) -> float:
        return sum(s[3] for s in self.segments)


def make_circuit(order: str, direction: str, cadence: float, rng: np.random.Generator) -> CircuitSpec:
    """Sample segment durations for one pass through the terrain park."""
    if order == "sa_first":
        first, second = (Segment.STAIR, TaskCategory.SA), (Segment.RAMP, TaskCategory.RD)
    elif order == "ra_first":
        first, second = (Segment.RAMP, TaskCategory.RA), (Segment.STAIR, TaskCategory.SD)
    else:
        raise BadCircuit(f"unknown circuit order {order!r}")

    def incline_duration(kind, mode):
        stride_hz = cadence * MODE_FUNDAMENTAL[mode]
        strides = 2.0 if kind is Segment.STAIR else 2.5  # four steps / 2.5 m of ramp
        return strides / stride_hz * rng.uniform(0.9, 1.1)

    long_walk, short_walk = rng.uniform(2.8, 3.6), rng.uniform(2.2, 2.8)
    before, after = (long_walk, short_walk) if direction == "forward" else (short_walk, long_walk)
    segments = (
        (Segment.WALKWAY_BEFORE, TaskCategory.LW, SubLabel.LWp, before),
        (first[0], first[1], SubLabel.NONE, incline_duration(*first)),
        (Segment.PLATFORM, TaskCategory.LW, SubLabel.NONE, rng.uniform(2.5, 3.5)),
        (second[0], second[1], SubLabel.NONE, incline_duration(*second)),
        (Segment.WALKWAY_AFTER, TaskCategory.LW, SubLabel.LWf, after),
    )
    spec = CircuitSpec(segments=segments, order=order, direction=direction)
    spec.validate()
    return spec


def _timeline(circuit: CircuitSpec, n_frames: int, shift_s: float):
    """Per-frame segment index with boundaries moved later by ``shift_s``."""
    bounds = np.cumsum([s[3] for s in circuit.segments])[:-1] + shift_s
    t = np.arange(n_frames) / SAMPLE_RATE_HZ
    return np.searchsorted(bounds, t, side="right")


def _segment_weights(circuit: CircuitSpec, n_frames: int) -> np.ndarray:
    """Smooth (frames x segments) blending weights centred on kinematic switches."""
    n_seg = len(circuit.segments)
    t = np.arange(n_frames) / SAMPLE_RATE_HZ
    bounds = np.cumsum([s[3] for s in circuit.segments])[:-1] + TOE_OFF_LEAD_S
    # logistic ramps; cumulative "past boundary k" indicators
    past = expit((t[:, None] - bounds[None, :]) / (CROSSFADE_S / 4))
    weights = np.empty((n_frames, n_seg))
    ones = np.ones((n_frames, 1))
    zeros = np.zeros((n_frames, 1))
    lower = np.hstack([ones, past])
    upper = np.hstack([past, zeros])
    weights[:] = lower - upper
    return np.clip(weights, 0.0, 1.0)


def synth_trial(profile: SubjectProfile, circuit: CircuitSpec, trial_seed: int, *,
                trial_id: str = "T01", leading_leg: str = "left", handrail: bool = False) -> Trial:
    circuit.validate()
    rng = np.random.default_rng(np.random.SeedSequence([profile.rng_seed, int(trial_seed)]))
    n = int(round(circuit.duration * SAMPLE_RATE_HZ))
    t = np.arange(n) / SAMPLE_RATE_HZ

    seg_idx = _timeline(circuit, n, 0.0)
    labels = np.array([int(circuit.segments[k][1]) for k in seg_idx], dtype=np.int8)
    sublabels = np.array([int(circuit.segments[k][2]) for k in seg_idx], dtype=np.int8)

    weights = _segment_weights(circuit, n)
    modes = [seg[1] for seg in circuit.segments]
    freq = profile.cadence * sum(weights[:, k] * MODE_FUNDAMENTAL[m] for k, m in enumerate(modes))
    theta = 2 * np.pi * np.cumsum(freq) / SAMPLE_RATE_HZ + rng.uniform(0, 2 * np.pi)

    gains = profile.gains * np.exp(rng.normal(0.0, TRIAL_GAIN_LOG_SIGMA, size=len(CHANNELS)))
    leg_shift = np.zeros(len(CHANNELS))
    trailing = "foot_r" if leading_leg == "left" else "foot_l"
    leg_shift[[i for i, ch in enumerate(CHANNELS) if ch.startswith(trailing)]] = np.pi

    harmonics = np.arange(1, N_HARMONICS + 1)
    signal = np.zeros((n, len(CHANNELS)))
    for k, mode in enumerate(modes):
        active = weights[:, k] > 1e-9
        if not active.any():
            continue
        amp = HARMONIC_AMPLITUDE[mode].copy()
        if handrail and mode in (TaskCategory.SA, TaskCategory.SD):
            amp[_FOREARM] *= HANDRAIL_FOREARM_SCALE
        phase = (HARMONIC_PHASE[mode]
                 + harmonics[None, :] * (profile.phases + leg_shift)[:, None])
        arg = theta[active, None, None] * harmonics[None, None, :] + phase[None]
        wave = (amp[None] * np.sin(arg)).sum(axis=2)
        signal[active] += weights[active, k, None] * wave

    signal *= gains
    if profile.tremor_amplitude > 0:
        tremor_phase = rng.uniform(0, 2 * np.pi, size=len(CHANNELS))
        tremor = profile.tremor_amplitude * np.sin(2 * np.pi * profile.tremor_frequency * t[:, None]
                                                   + tremor_phase[None, :])
        signal += tremor * TREMOR_MASK
    signal += rng.normal(0.0, NOISE_SIGMA, size=signal.shape)
    signal = np.round(signal, SIGNAL_DECIMALS)
    signal[signal == 0.0] = 0.0  # drop negative zeros so CSV round-trips byte for byte

    return Trial(
        subject_id=profile.subject_id, trial_id=trial_id, signal=signal, labels=labels,
        sublabels=sublabels, cohort=profile.cohort, leading_leg=leading_leg,
        circuit_order=circuit.order, handrail=handrail,
    )


@dataclass
class SynthConfig:
    healthy_subjects: int = 5
    pd_subjects: int = 5
    trials_per_subject: int = 10
    master_seed: int = 0

    def __post_init__(self):
        if min(self.healthy_subjects, self.pd_subjects, self.trials_per_subject) < 1:
            raise ValueError("cohort sizes and trials per subject must be >= 1")


def trial_plan(cohort: str, k: int, trials_per_subject: int):
    """Protocol for the k-th trial: (leading_leg, order, direction, handrail or None).

    Healthy subjects split trials into a handrail half and a free half;
    PD subjects split them by leading leg. Circuit order alternates with
    walking direction in both cohorts. ``handrail=None`` means "as desired".
    """
    order, direction = ("sa_first", "forward") if k % 2 == 0 else ("ra_first", "reverse")
    first_half = k < (trials_per_subject + 1) // 2
    if cohort == "healthy":
        return "left" if k % 4 < 2 else "right", order, direction, first_half
    return "left" if first_half else "right", order, direction, None


def synth_subject_trials(profile: SubjectProfile, trials_per_subject: int) -> list[Trial]:
    trials = []
    plan_rng = np.random.default_rng(np.random.SeedSequence([profile.rng_seed, 1_000_003]))
    for k in range(trials_per_subject):
        leg, order, direction, handrail = trial_plan(profile.cohort, k, trials_per_subject)
        if handrail is None:
            handrail = bool(plan_rng.random() < 0.5)
        circuit_rng = np.random.default_rng(np.random.SeedSequence([profile.rng_seed, 2_000_003, k]))
        circuit = make_circuit(order, direction, profile.cadence, circuit_rng)
        trials.append(synth_trial(profile, circuit, trial_seed=k, trial_id=f"{profile.subject_id}_T{k + 1:02d}",
                                  leading_leg=leg, handrail=handrail))
    return trials


def synth_cohort(config: SynthConfig) -> Dataset:
    """Generate the whole cohort in memory."""
    trials = []
    for cohort, count in (("healthy", config.healthy_subjects), ("pd", config.pd_subjects)):
        for index in range(count):
            profile = make_subject(cohort, index, config.master_seed)
            trials.extend(synth_subject_trials(profile, config.trials_per_subject))
    return Dataset(trials)


def write_dataset(dataset: Dataset, out_dir) -> Path:
    """Write trial CSVs under ``out_dir/trials`` and a ``manifest.csv``."""
    out_dir = Path(out_dir)
    try:
        rows = []
        for trial in dataset.trials:
            rel = Path("trials") / trial.subject_id / f"{trial.trial_id}.csv"
            (out_dir / rel).parent.mkdir(parents=True, exist_ok=True)
            save_trial(trial, out_dir / rel)
            rows.append(ManifestRow(trial.subject_id, trial.cohort, trial.trial_id, rel.as_posix(),
                                    trial.leading_leg, trial.circuit_order, trial.handrail))
        manifest = out_dir / "manifest.csv"
        write_manifest(rows, manifest)
    except OSError as exc:
        raise IoFailure(f"cannot write dataset under {out_dir}: {exc}") from exc
    return manifest


def synth_dataset(config: SynthConfig, out_dir) -> Dataset:
    dataset = synth_cohort(config)
    write_dataset(dataset, out_dir)
    return dataset
