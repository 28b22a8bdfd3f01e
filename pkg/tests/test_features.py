"""Amplitude transform, rolling RMSSD, head truncation, matrix packing."""
from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cogload.features import (
    FEATURE_NAMES,
    FEATURES_CSV_HEADER,
    FeatureRow,
    InsufficientData,
    NegativePower,
    RmssdWindow,
    amplitude_transform,
    featurize_stream,
    read_features_csv,
    rmssd,
    to_matrix,
    truncate_head,
    write_features_csv,
)
from cogload.ingest import SampleRecord, SchemaMismatch
from cogload.labels import LoadLabel, Task


def test_feature_names():
    assert FEATURE_NAMES == ["a_delta", "a_theta", "a_low_alpha", "a_high_alpha",
                             "a_low_beta", "a_high_beta", "a_low_gamma",
                             "a_middle_gamma", "hrv"]


def test_amplitude_perfect_squares():
    out = amplitude_transform([4, 9, 25, 49, 121, 169, 289, 361])
    assert out == [2, 3, 5, 7, 11, 13, 17, 19]


def test_amplitude_against_mpmath():
    mpmath.mp.dps = 40
    powers = [2.0, 3.0, 5.0, 7.0, 11.0, 0.1, 123456.789, 1e-9]
    out = amplitude_transform(powers)
    for got, p in zip(out, powers):
        assert abs(got - float(mpmath.sqrt(p))) <= 1e-12 * max(1.0, got)


def test_amplitude_rejects_negative_and_short():
    with pytest.raises(NegativePower):
        amplitude_transform([1, 2, 3, -0.5, 5, 6, 7, 8])
    with pytest.raises(ValueError):
        amplitude_transform([1, 2, 3])


def test_rmssd_hand_values():
    assert abs(rmssd([800.0, 810.0, 790.0]) - math.sqrt(250.0)) < 1e-12
    assert rmssd([800.0, 810.0]) == 10.0
    assert rmssd([5.0, 5.0, 5.0]) == 0.0


def test_rmssd_needs_two():
    with pytest.raises(InsufficientData):
        rmssd([800.0])
    with pytest.raises(InsufficientData):
        rmssd([])


@given(st.lists(st.floats(min_value=300, max_value=2000), min_size=2, max_size=12),
       st.floats(min_value=-500, max_value=500))
def test_rmssd_translation_invariant(xs, c):
    assert rmssd([x + c for x in xs]) == pytest.approx(rmssd(xs), abs=1e-6)


@given(st.lists(st.floats(min_value=300, max_value=2000), min_size=2, max_size=12),
       st.floats(min_value=0.25, max_value=4))
def test_rmssd_scales_linearly(xs, c):
    assert rmssd([x * c for x in xs]) == pytest.approx(c * rmssd(xs), rel=1e-9)


def test_window_warmup_sequence():
    w = RmssdWindow()
    assert w.value() == 0.0
    w.push([800.0])
    assert w.value() == 0.0          # still a single interval, carry 0
    w.push([810.0])
    assert w.value() == 10.0
    w.push([790.0])
    assert abs(w.value() - 15.811388300841896) < 1e-9


def test_window_eviction():
    w = RmssdWindow(capacity=2)
    w.push([800.0, 810.0])
    assert w.value() == 10.0
    w.push([790.0])                  # 800 falls out, window is [810, 790]
    assert w.value() == 20.0


def test_window_capacity_floor():
    with pytest.raises(ValueError):
        RmssdWindow(capacity=1)


def _rec(pid, rnd, task, tick, rr=(), powers=None):
    return SampleRecord(pid, rnd, task, tick, 0,
                        powers or [1.0] * 8, list(rr))


def test_featurize_labels_and_window_scope():
    recs = [
        _rec("A", 1, Task.REST, 0, rr=(800.0, 810.0)),
        _rec("A", 2, Task.ONE_BACK, 0),             # same sitting, window carries
        _rec("B", 1, Task.TWO_BACK, 0),             # new participant, fresh window
        _rec("B", 1, Task.UNLABELED, 1, rr=(700.0, 720.0)),
    ]
    rows = featurize_stream(recs)
    assert [r.label for r in rows] == [LoadLabel.BASELINE, LoadLabel.LOW,
                                       LoadLabel.HIGH, None]
    assert rows[0].hrv == 10.0
    assert rows[1].hrv == 10.0       # rounds share the participant's window
    assert rows[2].hrv == 0.0        # fresh window for B
    assert rows[3].hrv == 20.0
    assert rows[0].vector == [*rows[0].amplitudes, rows[0].hrv]


def test_featurize_window_capacity_respected():
    recs = [_rec("A", 1, Task.REST, t, rr=(800.0 + 10 * t,)) for t in range(6)]
    rows = featurize_stream(recs, window_capacity=3)
    # after 6 pushes the 3-slot fifo holds the last three intervals
    assert rows[-1].hrv == 10.0


def _segment(pid, rnd, task, n, start=0):
    return [_rec(pid, rnd, task, start + i) for i in range(n)]


def test_truncate_basic_and_identity():
    seg = _segment("A", 1, Task.REST, 90)
    assert len(truncate_head(seg, 3)) == 87
    assert truncate_head(seg, 0) == seg


def test_truncate_per_segment():
    recs = (_segment("A", 1, Task.ONE_BACK, 75)
            + _segment("A", 1, Task.TWO_BACK, 95))
    out = truncate_head(recs, 2)
    assert len(out) == 73 + 93
    assert out[0].tick == 2 and out[0].task is Task.ONE_BACK
    assert out[73].tick == 2 and out[73].task is Task.TWO_BACK


def test_truncate_detects_round_boundary():
    recs = _segment("A", 1, Task.REST, 5) + _segment("A", 2, Task.REST, 5)
    out = truncate_head(recs, 3)
    assert len(out) == 4
    assert {(r.round, r.tick) for r in out} == {(1, 3), (1, 4), (2, 3), (2, 4)}


def test_truncate_range_check():
    with pytest.raises(ValueError):
        truncate_head([], 11)
    with pytest.raises(ValueError):
        truncate_head([], -1)


def test_truncate_keeps_short_segments_empty():
    assert truncate_head(_segment("A", 1, Task.REST, 2), 3) == []


def _rows():
    recs = [
        _rec("A", 1, Task.REST, 0, rr=(800.0, 810.0), powers=[4.0] * 8),
        _rec("A", 1, Task.UNLABELED, 1, powers=[9.0] * 8),
        _rec("B", 1, Task.TWO_BACK, 0, powers=[25.0] * 8),
    ]
    return featurize_stream(recs)


def test_to_matrix_labeled_only():
    X, y, groups = to_matrix(_rows())
    assert X.shape == (2, 9) and X.dtype == np.float64
    assert y.tolist() == [int(LoadLabel.BASELINE), int(LoadLabel.HIGH)]
    assert groups.tolist() == ["A", "B"]
    assert X[0, 0] == 2.0 and X[1, 0] == 5.0


def test_to_matrix_keeps_unlabeled_as_minus_one():
    X, y, groups = to_matrix(_rows(), labeled_only=False)
    assert X.shape == (3, 9)
    assert y.tolist() == [0, -1, 2]


def test_features_csv_roundtrip(tmp_path):
    rows = _rows()
    path = str(tmp_path / "features.csv")
    write_features_csv(rows, path)
    back = read_features_csv(path)
    assert back == rows


def test_features_csv_schema(tmp_path):
    path = str(tmp_path / "x.csv")
    with open(path, "w") as fh:
        fh.write("nope\n")
    with pytest.raises(SchemaMismatch):
        read_features_csv(path)
