import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trial
from locomode.corpus import (
    CHANNELS,
    STD_FLOOR,
    ManifestRow,
    ReportCategory,
    SignalSource,
    SubLabel,
    TaskCategory,
    Trial,
    apply_normalizer,
    collapse,
    fit_normalizer,
    load_dataset,
    load_normalizer,
    load_trial,
    read_manifest,
    save_normalizer,
    save_trial,
    segment_windows,
    select_source,
    window_count,
    write_manifest,
)
from locomode.errors import (
    BadLabel,
    ChannelMismatch,
    EmptyInput,
    MissingChannel,
    NonFiniteSample,
    NonMonotonicTime,
    TooShort,
)


def brute_force_slices(n, size=50, stride=25):
    """Every (start, start + size) slice that fits, found by scanning all starts."""
    return [(s, s + size) for s in range(n) if s % stride == 0 and s + size <= n]


# ---------------------------------------------------------------------------
# sources

def test_feet_source_channels():
    trial = make_trial()
    names = SignalSource.FEET.channel_names
    assert names == (
        "foot_l_acc_x", "foot_l_acc_y", "foot_l_acc_z", "foot_l_gyr_x", "foot_l_gyr_y", "foot_l_gyr_z",
        "foot_r_acc_x", "foot_r_acc_y", "foot_r_acc_z", "foot_r_gyr_x", "foot_r_gyr_y", "foot_r_gyr_z",
    )
    out = select_source(trial, "feet")
    assert out.shape == (trial.n_frames, 12)
    np.testing.assert_array_equal(out, trial.signal[:, :12])


def test_fusion_is_all_channels_in_order():
    trial = make_trial()
    assert SignalSource.FUSION.channel_names == CHANNELS
    np.testing.assert_array_equal(select_source(trial, SignalSource.FUSION), trial.signal)


def test_trunk_pelvis_source():
    names = SignalSource.TRUNK_PELVIS.channel_names
    assert len(names) == 12
    assert all(n.startswith("trunk_") for n in names[:6])
    assert all(n.startswith("pelvis_") for n in names[6:])


def test_sources_partition_fusion():
    parts = [set(s.channel_names) for s in (SignalSource.FEET, SignalSource.TRUNK_PELVIS, SignalSource.FOREARMS)]
    assert all(len(p) == 12 for p in parts)
    assert not (parts[0] & parts[1]) and not (parts[0] & parts[2]) and not (parts[1] & parts[2])
    assert parts[0] | parts[1] | parts[2] == set(CHANNELS)


def test_collapse_is_total():
    for cat in ReportCategory:
        out = collapse(cat)
        assert isinstance(out, TaskCategory)
    assert collapse(ReportCategory.LWp) == TaskCategory.LW
    assert collapse(ReportCategory.LWf) == TaskCategory.LW
    for task in TaskCategory:
        assert collapse(ReportCategory[task.name]) == task


# ---------------------------------------------------------------------------
# normalizer

def test_normalizer_matches_two_pass():
    values = [2.0, 4.0, 4.0, 4.0, 6.0, 6.0, 8.0]
    norm = fit_normalizer([np.array(values)[:, None]])
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    assert norm.mean[0] == pytest.approx(4.857142857142857, rel=1e-15)
    assert norm.mean[0] == pytest.approx(mean, rel=1e-15)
    assert norm.std[0] == pytest.approx(math.sqrt(var), rel=1e-14)


def test_normalizer_pools_all_matrices():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(30, 3)), rng.normal(3.0, 2.0, size=(17, 3))
    norm = fit_normalizer([a, b])
    both = np.vstack([a, b])
    np.testing.assert_allclose(norm.mean, both.mean(axis=0), rtol=1e-13)
    np.testing.assert_allclose(norm.std, both.std(axis=0), rtol=1e-13)


def test_constant_channel_clamped():
    norm = fit_normalizer([np.full((10, 1), 5.0)])
    assert norm.mean[0] == 5.0
    assert norm.std[0] == STD_FLOOR
    np.testing.assert_array_equal(apply_normalizer(norm, np.full((4, 1), 5.0)), np.zeros((4, 1)))


def test_normalizer_channel_mismatch():
    with pytest.raises(ChannelMismatch):
        fit_normalizer([np.zeros((5, 12)), np.zeros((5, 36))])
    norm = fit_normalizer([np.random.default_rng(0).normal(size=(5, 12))])
    with pytest.raises(ChannelMismatch):
        apply_normalizer(norm, np.zeros((5, 36)))


def test_normalizer_empty():
    with pytest.raises(EmptyInput):
        fit_normalizer([])
    with pytest.raises(EmptyInput):
        fit_normalizer([np.zeros((1, 3))])


def test_apply_arithmetic():
    from locomode.corpus import Normalizer
    norm = Normalizer(mean=np.array([2.0]), std=np.array([2.0]))
    assert apply_normalizer(norm, np.array([[4.0]]))[0, 0] == 1.0


def test_self_normalization_is_standard():
    rng = np.random.default_rng(2)
    m = rng.normal(10.0, 3.0, size=(400, 6))
    z = apply_normalizer(fit_normalizer([m]), m)
    assert np.all(np.abs(z.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(z.std(axis=0) - 1.0) < 1e-9)


def test_normalizer_invert_round_trip():
    rng = np.random.default_rng(3)
    m = rng.normal(-4.0, 0.5, size=(60, 5))
    norm = fit_normalizer([m])
    back = norm.invert(apply_normalizer(norm, m))
    np.testing.assert_allclose(back, m, rtol=1e-9)


def test_normalizer_persistence(tmp_path):
    rng = np.random.default_rng(4)
    norm = fit_normalizer([rng.normal(size=(20, 4))])
    save_normalizer(norm, tmp_path / "n.norm")
    back = load_normalizer(tmp_path / "n.norm")
    np.testing.assert_array_equal(back.mean, norm.mean)
    np.testing.assert_array_equal(back.std, norm.std)


# ---------------------------------------------------------------------------
# windowing

def _labels(n, code=int(TaskCategory.LW)):
    return np.full(n, code, dtype=np.int8), np.zeros(n, dtype=np.int8)


def test_1200_frames_gives_47_windows():
    labels, subs = _labels(1200)
    windows = segment_windows(np.zeros((1200, 2)), labels, subs)
    slices = brute_force_slices(1200)
    assert len(windows) == 47 == len(slices)
    assert [(w.start_frame, w.start_frame + w.data.shape[0]) for w in windows] == slices


def test_50_frames_gives_one_window():
    labels, subs = _labels(50)
    windows = segment_windows(np.arange(100.0).reshape(50, 2), labels, subs)
    assert len(windows) == 1
    assert windows[0].start_frame == 0
    assert windows[0].data.shape == (50, 2)


def test_too_short():
    labels, subs = _labels(49)
    with pytest.raises(TooShort):
        segment_windows(np.zeros((49, 2)), labels, subs)


def test_last_frame_rule():
    labels = np.full(50, int(TaskCategory.SA), dtype=np.int8)
    subs = np.zeros(50, dtype=np.int8)
    labels[49] = int(TaskCategory.LW)
    subs[49] = int(SubLabel.LWf)
    (w,) = segment_windows(np.zeros((50, 1)), labels, subs)
    assert w.truth == ReportCategory.LWf
    assert w.train_label == TaskCategory.LW


def test_platform_lw_window():
    labels, subs = _labels(50)
    (w,) = segment_windows(np.zeros((50, 1)), labels, subs)
    assert w.truth == ReportCategory.LW
    assert w.train_label == TaskCategory.LW


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=50, max_value=5000))
def test_window_count_identity(n):
    expected = (n - 50) // 25 + 1
    assert window_count(n) == expected == len(brute_force_slices(n))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=50, max_value=600))
def test_windows_cover_each_frame_at_most_twice(n):
    labels, subs = _labels(n)
    windows = segment_windows(np.zeros((n, 1)), labels, subs)
    assert len(windows) == window_count(n)
    cover = np.zeros(n, dtype=int)
    for w in windows:
        cover[w.start_frame:w.start_frame + 50] += 1
    assert cover.max() <= 2


def test_trial_is_read_only():
    trial = make_trial()
    with pytest.raises(ValueError):
        trial.signal[0, 0] = 1.0


def test_trial_rejects_sublabel_off_lw():
    labels = np.full(60, int(TaskCategory.SA), dtype=np.int8)
    subs = np.zeros(60, dtype=np.int8)
    subs[5] = int(SubLabel.LWp)
    with pytest.raises(BadLabel, match="row 5"):
        make_trial(n=60, labels=labels, sublabels=subs)


# ---------------------------------------------------------------------------
# CSV I/O

def test_round_trip_1200_rows(tmp_path):
    trial = make_trial(n=1200, seed=5)
    path = tmp_path / "trial.csv"
    save_trial(trial, path)
    back = load_trial(path, subject_id="P01", trial_id="P01_T01")
    assert back.n_frames == 1200
    np.testing.assert_array_equal(back.signal, trial.signal)
    np.testing.assert_array_equal(back.labels, trial.labels)
    np.testing.assert_array_equal(back.sublabels, trial.sublabels)
    save_trial(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def _rewrite(path, fn):
    lines = path.read_text().splitlines()
    path.write_text("\n".join(fn(lines)) + "\n")


def test_missing_channel(tmp_path):
    import pandas as pd
    path = tmp_path / "t.csv"
    save_trial(make_trial(), path)
    df = pd.read_csv(path, keep_default_na=False).drop(columns=["foot_l_gyr_z"])
    df.to_csv(path, index=False)
    with pytest.raises(MissingChannel, match="foot_l_gyr_z"):
        load_trial(path)


def test_columns_reordered_to_canonical(tmp_path):
    import pandas as pd
    trial = make_trial(seed=6)
    path = tmp_path / "t.csv"
    save_trial(trial, path)
    df = pd.read_csv(path, keep_default_na=False, dtype=str)
    cols = list(df.columns)
    shuffled = [cols[0], *reversed(cols[1:-2]), cols[-1], cols[-2]]
    df[shuffled].to_csv(path, index=False)
    back = load_trial(path)
    np.testing.assert_array_equal(back.signal, trial.signal)


def test_sublabel_on_non_lw_row(tmp_path):
    path = tmp_path / "t.csv"
    save_trial(make_trial(), path)

    def corrupt(lines):
        row = lines[50].split(",")  # a frame in the SA block
        assert row[-2] == "SA"
        row[-1] = "LWp"
        lines[50] = ",".join(row)
        return lines

    _rewrite(path, corrupt)
    with pytest.raises(BadLabel, match="row 49"):
        load_trial(path)


def test_unknown_label(tmp_path):
    path = tmp_path / "t.csv"
    save_trial(make_trial(), path)

    def corrupt(lines):
        row = lines[3].split(",")
        row[-2] = "XX"
        lines[3] = ",".join(row)
        return lines

    _rewrite(path, corrupt)
    with pytest.raises(BadLabel, match="row 2"):
        load_trial(path)


def test_non_monotonic_time(tmp_path):
    path = tmp_path / "t.csv"
    save_trial(make_trial(), path)

    def corrupt(lines):
        row = lines[10].split(",")
        row[0] = "0.05"
        lines[10] = ",".join(row)
        return lines

    _rewrite(path, corrupt)
    with pytest.raises(NonMonotonicTime):
        load_trial(path)


@pytest.mark.parametrize("bad", ["nan", "inf", "-inf"])
def test_non_finite_sample(tmp_path, bad):
    path = tmp_path / "t.csv"
    save_trial(make_trial(), path)

    def corrupt(lines):
        row = lines[7].split(",")
        row[3] = bad
        lines[7] = ",".join(row)
        return lines

    _rewrite(path, corrupt)
    with pytest.raises(NonFiniteSample, match=CHANNELS[2]):
        load_trial(path)


def test_manifest_and_dataset(tmp_path):
    trials = [make_trial(seed=k, subject_id=f"P0{k}", trial_id=f"P0{k}_T01") for k in (1, 2)]
    rows = []
    for t in trials:
        save_trial(t, tmp_path / f"{t.trial_id}.csv")
        rows.append(ManifestRow(t.subject_id, "pd", t.trial_id, f"{t.trial_id}.csv", "left", "sa_first", True))
    write_manifest(rows, tmp_path / "manifest.csv")
    assert read_manifest(tmp_path / "manifest.csv") == rows
    ds = load_dataset(tmp_path)
    assert ds.subjects() == ["P01", "P02"]
    assert ds.trials_of("P02")[0].handrail is True
    np.testing.assert_array_equal(ds.trials[0].signal, trials[0].signal)


def test_trial_requires_36_channels():
    with pytest.raises(ChannelMismatch):
        Trial("P01", "T", np.zeros((60, 12)), np.zeros(60), np.zeros(60))
