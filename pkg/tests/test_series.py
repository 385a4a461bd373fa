import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsagent.errors import ConstantSeries, EmptySeries, FileMissing, LabelLengthMismatch, ParseError
from tsagent.series import (
    TimeSeries,
    denormalize,
    detrend,
    linear_fit,
    load_series,
    normalize,
    preprocess,
    save_series,
    segment_windows,
)
from oracles import lstsq_line

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
series_values = st.lists(finite, min_size=2, max_size=200)


def write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_two_rows(tmp_path):
    s = load_series(write(tmp_path, "index,value\n0,1.0\n1,2.0"))
    assert s.values.tolist() == [1.0, 2.0]
    assert s.labels is None
    assert s.indices.tolist() == [0, 1]


def test_load_sorts_and_reindexes(tmp_path):
    s = load_series(write(tmp_path, "index,value,label\r\n7,3.0,1\r\n2,1.0,0\r\n"), has_labels=True)
    assert s.values.tolist() == [1.0, 3.0]
    assert s.labels.tolist() == [0, 1]


def test_label_column_wrong_length(tmp_path):
    with pytest.raises(LabelLengthMismatch):
        load_series(write(tmp_path, "index,value,label\n0,1.0,0\n1,2.0,\n"), has_labels=True)


@pytest.mark.parametrize("tok", ["nan", "inf", "-inf", "abc"])
def test_rejects_bad_values(tmp_path, tok):
    with pytest.raises(ParseError) as exc:
        load_series(write(tmp_path, f"index,value\n0,1.0\n1,{tok}\n"))
    assert exc.value.row == 3


def test_duplicate_index_rejected(tmp_path):
    with pytest.raises(ParseError):
        load_series(write(tmp_path, "index,value\n0,1\n0,2\n"))


def test_missing_and_empty(tmp_path):
    with pytest.raises(FileMissing):
        load_series(tmp_path / "nope.csv")
    with pytest.raises(EmptySeries):
        load_series(write(tmp_path, "index,value\n"))


def test_save_load_round_trip(tmp_path):
    s = TimeSeries("x", [0.1, 1e-17, -3.25], [0, 1, 0])
    save_series(s, tmp_path / "x.csv")
    back = load_series(tmp_path / "x.csv", has_labels=True)
    assert back.values.tolist() == s.values.tolist()
    assert back.labels.tolist() == [0, 1, 0]


def test_normalize_examples():
    out, p = normalize(TimeSeries("a", [0, 5, 10]))
    assert out.values.tolist() == [0.0, 0.5, 1.0] and (p.a, p.b) == (0, 10)
    out, _ = normalize(TimeSeries("b", [2, 4, 8]))
    np.testing.assert_allclose(out.values, [0.0, 1 / 3, 1.0], atol=1e-9)
    with pytest.raises(ConstantSeries):
        normalize(TimeSeries("c", [3, 3, 3]))


@given(series_values)
def test_normalize_exact_extremes_and_inverse(vals):
    s = TimeSeries("h", vals)
    if np.ptp(s.values) == 0:
        with pytest.raises(ConstantSeries):
            normalize(s)
        return
    out, p = normalize(s)
    assert out.values[np.argmin(s.values)] == 0.0
    assert out.values[np.argmax(s.values)] == 1.0
    assert out.values.min() >= 0.0 and out.values.max() <= 1.0
    np.testing.assert_allclose(denormalize(out.values, p), s.values, rtol=0, atol=1e-9 * max(1.0, np.abs(s.values).max()))


def test_detrend_examples():
    np.testing.assert_allclose(detrend(TimeSeries("a", [0, 1, 2, 3, 4])).values, 0, atol=1e-9)
    np.testing.assert_allclose(detrend(TimeSeries("b", [5, 5, 5, 5])).values, 0, atol=1e-9)
    np.testing.assert_allclose(detrend(TimeSeries("c", [0, 0, 0, 10, 0])).values, [0, -1, -2, 7, -4], atol=1e-9)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=100))
def test_linear_fit_matches_loop_oracle(vals):
    slope, icpt = linear_fit(vals)
    o_slope, o_icpt = lstsq_line(vals)
    assert slope == pytest.approx(o_slope, abs=1e-7)
    assert icpt == pytest.approx(o_icpt, abs=1e-6)


@given(series_values)
def test_detrend_residual_fit_vanishes_and_idempotent(vals):
    scale = max(1.0, float(np.abs(vals).max()))
    once = detrend(TimeSeries("h", vals))
    slope, icpt = linear_fit(once.values)
    assert abs(slope) <= 1e-9 * scale and abs(icpt) <= 1e-9 * scale * len(vals)
    twice = detrend(once)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-9 * scale * len(vals))


@pytest.mark.parametrize("n,expected", [
    (200, [(0, 100), (100, 200)]),
    (250, [(0, 100), (100, 200), (200, 250)]),
    (210, [(0, 100), (100, 200)]),
    (15, []),
])
def test_segment_examples(n, expected):
    ws = segment_windows(TimeSeries("s", np.arange(n, dtype=float)))
    assert [(w.start, w.end) for w in ws] == expected
    for w in ws:
        assert w.values.tolist() == list(range(w.start, w.end))


def test_segment_empty():
    with pytest.raises((EmptySeries, ValueError)):
        segment_windows(TimeSeries("e", []))


@given(st.integers(1, 500), st.integers(1, 120))
def test_segment_covers_prefix_without_overlap(n, length):
    ws = segment_windows(TimeSeries("s", np.zeros(n)), length=length, step=length)
    pos = 0
    for w in ws:
        assert w.start == pos and w.end - w.start == len(w.values)
        pos = w.end
    assert pos <= n and n - pos < max(length, 1)


def test_preprocess_constant_and_affine_are_flat():
    assert np.all(preprocess(TimeSeries("c", [4.0] * 10)).values == 0)
    assert np.all(preprocess(TimeSeries("a", 3.0 * np.arange(50) + 2)).values == 0)


def test_preprocess_unit_range():
    x = np.sin(np.arange(100) / 5.0) + 0.05 * np.arange(100)
    out = preprocess(TimeSeries("x", x)).values
    assert out.min() == 0.0 and out.max() == 1.0
