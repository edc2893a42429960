import numpy as np
import pytest

from locomode.corpus import CHANNELS, SubLabel, TaskCategory, Trial
from locomode.synthgen import SynthConfig, synth_cohort


def make_trial(n=120, seed=0, labels=None, sublabels=None, **meta):
    rng = np.random.default_rng(seed)
    signal = np.round(rng.normal(size=(n, len(CHANNELS))), 6)
    signal[signal == 0.0] = 0.0
    if labels is None:
        labels = np.full(n, int(TaskCategory.LW), dtype=np.int8)
        labels[n // 3: 2 * n // 3] = int(TaskCategory.SA)
    if sublabels is None:
        sublabels = np.zeros(n, dtype=np.int8)
        sublabels[: n // 3] = int(SubLabel.LWp)
        sublabels[2 * n // 3:] = int(SubLabel.LWf)
    meta.setdefault("subject_id", "P01")
    meta.setdefault("trial_id", "P01_T01")
    return Trial(signal=signal, labels=labels, sublabels=sublabels, **meta)


@pytest.fixture(scope="session")
def small_cohort():
    """2 healthy + 3 PD subjects, 3 trials each."""
    return synth_cohort(SynthConfig(healthy_subjects=2, pd_subjects=3, trials_per_subject=3, master_seed=7))


# reference SI-I / LDA / feet confusion block:
# rows RA, RD, SA, SD, LWp, LWf (true); columns RA, RD, SA, SD, LW (predicted)
TABLE2_SI1_LDA_FEET = np.array([
    [284, 0, 73, 0, 16],
    [10, 289, 0, 68, 40],
    [24, 0, 308, 0, 1],
    [0, 9, 0, 275, 0],
    [69, 92, 12, 4, 88],
    [261, 40, 49, 60, 408],
])


def expand_confusion(counts):
    """The (truth, prediction) multiset that tallies to ``counts``."""
    truths, preds = [], []
    for r, row in enumerate(counts):
        for c, n in enumerate(row):
            truths += [r] * int(n)
            preds += [c] * int(n)
    return truths, preds


def power_spectrum(x, rate=100.0):
    """Hann-windowed periodogram; the window keeps gait-harmonic leakage out of the tremor band."""
    x = np.asarray(x, dtype=float)
    x = (x - x.mean()) * np.hanning(len(x))
    return np.fft.rfftfreq(len(x), d=1.0 / rate), np.abs(np.fft.rfft(x)) ** 2


def tremor_peak(x, rate=100.0):
    """(strongest frequency in 3-7 Hz, largest 4-6 Hz bin power over its local +-1 Hz median).

    The local median tracks the broad gait skirt, so only a narrow line scores high.
    """
    freqs, spec = power_spectrum(x, rate)
    search = (freqs >= 3.0) & (freqs <= 7.0)
    prominence = max(
        spec[i] / np.median(spec[(freqs >= freqs[i] - 1.0) & (freqs <= freqs[i] + 1.0)])
        for i in np.flatnonzero((freqs >= 4.0) & (freqs <= 6.0))
    )
    return freqs[search][np.argmax(spec[search])], prominence


# a 4-6 Hz bin this far above its neighbourhood is a line, not noise or gait leakage
PEAK_PROMINENCE = 20.0


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: dict = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
