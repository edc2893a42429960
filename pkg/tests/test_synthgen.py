import itertools

import numpy as np
import pytest

from conftest import PEAK_PROMINENCE, tremor_peak
from locomode.corpus import (
    CHANNELS,
    SAMPLE_RATE_HZ,
    SubLabel,
    TaskCategory,
    load_dataset,
    segment_windows,
)
from locomode.errors import BadCircuit
from locomode.synthgen import (
    CADENCE_BASELINE,
    CADENCE_SPREAD,
    MIN_SEGMENT_S,
    CircuitSpec,
    Segment,
    SynthConfig,
    make_circuit,
    make_subject,
    synth_cohort,
    synth_dataset,
    synth_trial,
    trial_plan,
)

FOREARM_ACC = [i for i, ch in enumerate(CHANNELS) if ch.startswith("forearm") and "_acc_" in ch]


def runs(trial):
    """Run-length encoding of the (label, sublabel) timeline."""
    pairs = zip(trial.labels.tolist(), trial.sublabels.tolist())
    return [key for key, _ in itertools.groupby(pairs)]


def make_trial(cohort, index=0, seed=0, order="sa_first", direction="forward", **kw):
    profile = make_subject(cohort, index, seed)
    circuit = make_circuit(order, direction, profile.cadence, np.random.default_rng(index))
    return profile, circuit, synth_trial(profile, circuit, trial_seed=3, **kw)


def test_make_subject_deterministic():
    a, b = make_subject("pd", 2, 11), make_subject("pd", 2, 11)
    np.testing.assert_array_equal(a.gains, b.gains)
    np.testing.assert_array_equal(a.phases, b.phases)
    assert (a.cadence, a.tremor_amplitude, a.tremor_frequency, a.rng_seed) == \
        (b.cadence, b.tremor_amplitude, b.tremor_frequency, b.rng_seed)
    assert make_subject("pd", 3, 11).rng_seed != a.rng_seed
    assert make_subject("healthy", 2, 11).rng_seed != a.rng_seed


def test_healthy_has_no_tremor():
    for k in range(20):
        p = make_subject("healthy", k, 5)
        assert p.tremor_amplitude == 0.0
        assert np.all(p.gains > 0)
        lo, hi = CADENCE_BASELINE["healthy"] * (1 - CADENCE_SPREAD), CADENCE_BASELINE["healthy"] * (1 + CADENCE_SPREAD)
        assert lo <= p.cadence <= hi
        assert p.subject_id == f"H{k + 1:02d}"


def test_pd_tremor_distribution():
    draws = [make_subject("pd", k, 0) for k in range(1000)]
    freqs = np.array([p.tremor_frequency for p in draws])
    amps = np.array([p.tremor_amplitude for p in draws])
    assert np.all((freqs >= 4.0) & (freqs <= 6.0))
    assert 4.8 <= freqs.mean() <= 5.2
    assert np.all((amps >= 0.3) & (amps <= 0.8))
    assert all(np.all(p.gains > 0) for p in draws)


def test_gain_spread():
    gains = np.concatenate([make_subject("pd", k, 1).gains for k in range(300)])
    assert np.std(np.log(gains)) == pytest.approx(0.15, rel=0.05)


def test_make_subject_rejects_bad_input():
    with pytest.raises(ValueError):
        make_subject("pd", -1, 0)
    with pytest.raises(ValueError):
        make_subject("elderly", 0, 0)


def test_sa_first_forward_timeline():
    _, _, trial = make_trial("pd")
    LW, SA, RD = int(TaskCategory.LW), int(TaskCategory.SA), int(TaskCategory.RD)
    assert runs(trial) == [(LW, int(SubLabel.LWp)), (SA, 0), (LW, 0), (RD, 0), (LW, int(SubLabel.LWf))]


def test_ra_first_timeline():
    _, _, trial = make_trial("healthy", order="ra_first", direction="reverse")
    LW, RA, SD = int(TaskCategory.LW), int(TaskCategory.RA), int(TaskCategory.SD)
    assert runs(trial) == [(LW, int(SubLabel.LWp)), (RA, 0), (LW, 0), (SD, 0), (LW, int(SubLabel.LWf))]


def test_direction_swaps_walkway_lengths():
    rng = np.random.default_rng(0)
    for _ in range(20):
        fwd = make_circuit("sa_first", "forward", 0.8, rng)
        rev = make_circuit("sa_first", "reverse", 0.8, rng)
        assert fwd.segments[0][3] > fwd.segments[-1][3]
        assert rev.segments[0][3] < rev.segments[-1][3]


def test_labels_follow_circuit_durations():
    _, circuit, trial = make_trial("pd", index=1)
    bounds = np.cumsum([s[3] for s in circuit.segments])[:-1]
    change = np.flatnonzero(np.diff(trial.labels.astype(int)) != 0) + 1
    np.testing.assert_allclose(change / SAMPLE_RATE_HZ, bounds, atol=1.0 / SAMPLE_RATE_HZ)
    assert trial.n_frames == int(round(circuit.duration * SAMPLE_RATE_HZ))


def test_every_segment_gives_two_windows():
    ds = synth_cohort(SynthConfig(2, 2, 4, master_seed=3))
    for trial in ds.trials:
        bounds = np.flatnonzero(np.diff(trial.labels.astype(int)) != 0) + 1
        edges = [0, *bounds, trial.n_frames]
        for a, b in zip(edges[:-1], edges[1:]):
            assert (b - a) / SAMPLE_RATE_HZ >= MIN_SEGMENT_S
            assert (b - a - 50) // 25 + 1 >= 2
        seq = runs(trial)
        assert seq[0][1] == int(SubLabel.LWp) and seq[-1][1] == int(SubLabel.LWf)


def test_pd_forearm_tremor_peak():
    for k in range(3):
        profile, _, trial = make_trial("pd", index=k, seed=4)
        for c in FOREARM_ACC:
            peak, ratio = tremor_peak(trial.signal[:, c])
            assert abs(peak - profile.tremor_frequency) <= 0.2
            assert ratio > PEAK_PROMINENCE


def test_healthy_forearm_has_no_tremor_peak():
    for k in range(3):
        _, _, trial = make_trial("healthy", index=k, seed=4)
        for c in FOREARM_ACC:
            assert tremor_peak(trial.signal[:, c])[1] < PEAK_PROMINENCE


def test_synth_trial_deterministic():
    profile, circuit, a = make_trial("pd", index=2)
    b = synth_trial(profile, circuit, trial_seed=3)
    np.testing.assert_array_equal(a.signal, b.signal)
    c = synth_trial(profile, circuit, trial_seed=4)
    assert not np.array_equal(a.signal, c.signal)


def test_handrail_damps_forearms_on_stairs():
    profile = make_subject("healthy", 0, 2)
    circuit = make_circuit("sa_first", "forward", profile.cadence, np.random.default_rng(1))
    free = synth_trial(profile, circuit, 1, handrail=False)
    rail = synth_trial(profile, circuit, 1, handrail=True)
    stairs = free.labels == TaskCategory.SA
    forearms = [i for i, ch in enumerate(CHANNELS) if ch.startswith("forearm")]
    assert rail.signal[stairs][:, forearms].std() < 0.75 * free.signal[stairs][:, forearms].std()
    feet = slice(0, 12)
    np.testing.assert_allclose(rail.signal[stairs][:, feet].std(), free.signal[stairs][:, feet].std(), rtol=0.02)


def test_bad_circuits():
    ok = make_circuit("sa_first", "forward", 0.8, np.random.default_rng(0))
    segs = list(ok.segments)
    two_stairs = segs.copy()
    two_stairs[3] = (Segment.STAIR, TaskCategory.SD, SubLabel.NONE, 2.0)
    with pytest.raises(BadCircuit):
        CircuitSpec(tuple(two_stairs)).validate()
    short = segs.copy()
    short[2] = (Segment.PLATFORM, TaskCategory.LW, SubLabel.NONE, 0.5)
    with pytest.raises(BadCircuit):
        CircuitSpec(tuple(short)).validate()
    moved = [segs[0], segs[1], segs[3], segs[2], segs[4]]
    with pytest.raises(BadCircuit):
        CircuitSpec(tuple(moved)).validate()
    with pytest.raises(BadCircuit):
        make_circuit("zigzag", "forward", 0.8, np.random.default_rng(0))
    profile = make_subject("pd", 0, 0)
    with pytest.raises(BadCircuit):
        synth_trial(profile, CircuitSpec(tuple(short)), 0)


def test_trial_plan_protocol():
    healthy = [trial_plan("healthy", k, 10) for k in range(10)]
    assert [h[3] for h in healthy] == [True] * 5 + [False] * 5
    pd_plan = [trial_plan("pd", k, 10) for k in range(10)]
    assert [p[0] for p in pd_plan] == ["left"] * 5 + ["right"] * 5
    assert all(p[3] is None for p in pd_plan)
    orders = [p[1] for p in pd_plan]
    assert orders.count("sa_first") == orders.count("ra_first") == 5
    assert all(a != b for a, b in zip(orders, orders[1:]))


def test_default_cohort_counts():
    ds = synth_cohort(SynthConfig())
    assert len(ds.subjects()) == 10
    assert len(ds.trials) == 100
    assert ds.subjects("healthy") == [f"H{k:02d}" for k in range(1, 6)]
    for s in ds.subjects("healthy"):
        assert sum(t.handrail for t in ds.trials_of(s)) == 5
    for s in ds.subjects("pd"):
        legs = [t.leading_leg for t in ds.trials_of(s)]
        assert legs.count("left") == legs.count("right") == 5


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(healthy_subjects=0)


def test_written_dataset_loads_and_is_reproducible(tmp_path):
    cfg = SynthConfig(1, 2, 2, master_seed=9)
    ds = synth_dataset(cfg, tmp_path / "a")
    synth_dataset(cfg, tmp_path / "b")
    manifest = (tmp_path / "a" / "manifest.csv").read_text().splitlines()
    assert len(manifest) == 1 + 6
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*.csv"))
    assert files_a == files_b and len(files_a) == 7
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    loaded = load_dataset(tmp_path / "a")
    for orig, back in zip(ds.trials, loaded.trials):
        assert (orig.subject_id, orig.trial_id, orig.cohort, orig.handrail, orig.leading_leg) == \
            (back.subject_id, back.trial_id, back.cohort, back.handrail, back.leading_leg)
        np.testing.assert_array_equal(orig.signal, back.signal)
        np.testing.assert_array_equal(orig.labels, back.labels)
        assert len(segment_windows(back.signal, back.labels, back.sublabels)) >= 10
