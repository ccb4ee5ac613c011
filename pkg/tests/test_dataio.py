import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scatterfusion.dataio import (
    SplitSpec,
    count_windows,
    denormalize,
    load_csv,
    normalize,
    split,
    synth,
    windows,
)
from scatterfusion.errors import ConfigError, DataError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv_preserves_order(tmp_path):
    ds = load_csv(write(tmp_path, "a,b\n1,2\n3,4\n5,6\n"))
    assert ds.values.shape == (3, 2) and ds.values.dtype == np.float64
    assert np.array_equal(ds.values, [[1, 2], [3, 4], [5, 6]])
    assert ds.columns == ["a", "b"] and ds.timestamps is None


def test_load_csv_missing_cell(tmp_path):
    p = write(tmp_path, "a\n1\n\n3\n")  # a blank line is skipped, not a gap
    assert load_csv(p).n == 2
    p = write(tmp_path, "a,b\n1,0\n,0\n3,0\n")
    with pytest.raises(DataError, match="row 3"):
        load_csv(p, on_missing="reject")
    assert np.array_equal(load_csv(p, on_missing="interpolate").values[:, 0], [1.0, 2.0, 3.0])
    with pytest.raises(ConfigError):
        load_csv(p, on_missing="drop")


def test_load_csv_bad_cell_is_addressed(tmp_path):
    with pytest.raises(DataError, match=r"row 2, column 'b'"):
        load_csv(write(tmp_path, "a,b\n1,x\n"))


def test_load_csv_timestamps(tmp_path):
    ds = load_csv(write(tmp_path, "date,v\n2024-01-01,1\n2024-01-02,2\n"))
    assert ds.columns == ["v"] and len(ds.timestamps) == 2
    ds = load_csv(write(tmp_path, "step,v\n0,1\n5,2\n"), timestamp_column="step")
    assert ds.timestamps == [0, 5] and ds.channels == 1
    with pytest.raises(DataError, match="strictly increasing"):
        load_csv(write(tmp_path, "t,v\n3,1\n2,2\n"))
    with pytest.raises(DataError):
        load_csv(write(tmp_path, "a,b\n1\n"))


def test_split_examples():
    s = split(100, 4, 2)
    assert (s.train, s.val, s.test) == ((0, 70), (70, 80), (80, 100))
    with pytest.raises(DataError):
        split(10, 8, 1)
    with pytest.raises(ConfigError):
        SplitSpec(0.5, 0.1, 0.1)


@given(st.integers(60, 2000), st.integers(1, 8), st.integers(1, 4))
def test_split_ranges_partition(n, T_s, T_p):
    try:
        s = split(n, T_s, T_p)
    except DataError:
        return
    assert s.train[0] == 0 and s.train[1] == s.val[0] and s.val[1] == s.test[0] and s.test[1] == n


@pytest.mark.parametrize("T_s,T_p", [(8, 4), (24, 12), (5, 1)])
def test_strict_boundary_costs_Ts_minus_1_windows(T_s, T_p):
    n = 1000
    s = split(n, T_s, T_p)
    for rng in (s.val, s.test):
        loose = count_windows(rng, T_s, T_p)
        strict = count_windows(rng, T_s, T_p, strict=True)
        assert loose - strict == T_s - 1
    assert count_windows(s.train, T_s, T_p) == count_windows(s.train, T_s, T_p, strict=True)


def test_non_strict_windows_predict_only_their_split():
    values = np.arange(200.0)[:, None]
    s = split(200, 10, 5)
    w = windows(values, s.test, 10, 5)
    assert w.targets.min() >= s.test[0]
    assert w.inputs.min() == s.test[0] - 9
    strict = windows(values, s.test, 10, 5, strict=True)
    assert strict.inputs.min() == s.test[0]


def test_window_examples():
    assert count_windows((0, 10), 4, 2) == 5
    assert len(windows(np.zeros((10, 1)), (0, 10), 4, 2)) == 5
    assert count_windows((0, 10), 4, 2, stride=10) == 1


def test_window_count_against_enumeration(rng):
    for _ in range(50):
        T_s, T_p = int(rng.integers(1, 20)), int(rng.integers(1, 10))
        length = int(rng.integers(T_s + T_p, 200))
        stride = int(rng.integers(1, 12))
        enumerated = sum(1 for s in range(0, length) if s % stride == 0 and s + T_s + T_p <= length)
        assert count_windows((0, length), T_s, T_p, stride) == enumerated
        assert len(windows(np.zeros((length, 1)), (0, length), T_s, T_p, stride)) == enumerated


def test_windows_match_slicing(rng):
    values = rng.normal(size=(60, 3))
    w = windows(values, (10, 60), 8, 4, stride=3, strict=True)
    for i, s in enumerate(w.starts):
        assert np.array_equal(w.inputs[i], values[s : s + 8])
        assert np.array_equal(w.targets[i], values[s + 8 : s + 12])
    assert not w.inputs.flags.writeable


def test_normalize_roundtrip(rng):
    x = rng.normal(size=(5, 30, 3)) * 7 + 3
    z, mu, sd = normalize(x)
    assert np.abs(denormalize(z, mu, sd) - x).max() < 1e-12
    assert np.abs(z.mean(axis=-2)).max() < 1e-12


def test_synth_examples():
    ds = synth("sine", 240)
    assert abs(np.abs(ds.values).max() - 1) < 1e-12
    a = synth("sine+trend+noise", 300, channels=2, seed=5)
    b = synth("sine+trend+noise", 300, channels=2, seed=5)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, synth("sine+trend+noise", 300, channels=2, seed=6).values)
    with pytest.raises(ConfigError):
        synth("square", 100)


def test_synth_trend_slope():
    n, s = 2400, 0.01
    y = synth("sine+trend", n, slope=s).values[:, 0]
    fitted = np.polyfit(np.arange(n), y, 1)[0]
    assert abs(fitted - s) / s < 0.02


@pytest.mark.parametrize("kind", ["am-modulated", "warped", "sine+trend+noise"])
def test_synth_kinds_shape(kind):
    ds = synth(kind, 500, channels=3)
    assert ds.values.shape == (500, 3) and np.all(np.isfinite(ds.values))
