"""Synthetic cohort generator and its deliberately naive reference pipeline."""
from __future__ import annotations

import math

import numpy as np
import pytest

from cogload import synth
from cogload.features import featurize_stream, to_matrix, truncate_head
from cogload.labels import LoadLabel, Task
from cogload.stats import kruskal_wallis
from cogload.synth import (
    EXAM_HIGH_COUNTS,
    EXAM_LOW_COUNTS,
    SCHEDULE,
    TICKS_PER_ROUND,
    ClassProfile,
    SyntheticCohort,
    default_profiles,
    exam_label_mixture,
    flat_profiles,
    generate_cohort,
    generate_exam_stream,
    inject_outliers,
    oracle_pipeline,
    profiles_from_json,
    profiles_to_json,
)


def _small(n=2, rounds=2, seed=7, **kw):
    return SyntheticCohort(n_participants=n, rounds=rounds, seed=seed, **kw)


def test_schedule_shape():
    assert sum(n for _, n in SCHEDULE) == TICKS_PER_ROUND
    assert [t for t, _ in SCHEDULE] == [Task.REST, Task.ONE_BACK, Task.TWO_BACK]
    assert [n for _, n in SCHEDULE] == [90, 75, 95]


def test_cohort_record_layout():
    recs = list(generate_cohort(_small()))
    assert len(recs) == 2 * 2 * TICKS_PER_ROUND  # participants x rounds x ticks
    per = [r for r in recs if r.participant_id == recs[0].participant_id]
    assert len(per) == 520
    r1 = [r for r in per if r.round == 1]
    assert [r.tick for r in r1] == list(range(TICKS_PER_ROUND))
    assert sum(1 for r in r1 if r.task is Task.REST) == 90
    assert sum(1 for r in r1 if r.task is Task.ONE_BACK) == 75
    assert sum(1 for r in r1 if r.task is Task.TWO_BACK) == 95
    # the task blocks are contiguous and in schedule order
    boundaries = [r.task for r in r1]
    assert boundaries == [Task.REST] * 90 + [Task.ONE_BACK] * 75 + [Task.TWO_BACK] * 95


def test_cohort_determinism():
    a = list(generate_cohort(_small()))
    b = list(generate_cohort(_small()))
    assert a == b
    c = list(generate_cohort(_small(seed=8)))
    assert a != c


def test_beats_per_tick_bounded():
    for rec in generate_cohort(_small(n=3, rounds=1)):
        assert 0 <= len(rec.rr_intervals) <= 2
        for rr in rec.rr_intervals:
            assert 550.0 <= rr <= 2000.0
        assert all(p > 0 for p in rec.band_power)


def test_zero_spread_profile_is_constant():
    profiles = {
        lab: ClassProfile(band_log_mean=(9.0,) * 8, band_log_std=(0.0,) * 8,
                          rr_mean_ms=800.0, rr_std_ms=0.0)
        for lab in LoadLabel
    }
    cohort = _small(n=2, rounds=1, offset_scale=0.0, rr_offset_std_ms=0.0)
    recs = list(generate_cohort(cohort, profiles))
    want = math.exp(9.0)
    for rec in recs:
        assert rec.band_power == pytest.approx([want] * 8, rel=1e-12)
        for rr in rec.rr_intervals:
            assert rr == 800.0


def test_rmssd_target_property():
    p = ClassProfile((9.0,) * 8, (0.1,) * 8, 850.0, 45.0)
    assert p.rmssd_target == pytest.approx(45.0 * math.sqrt(2))


def test_profile_validation():
    with pytest.raises(ValueError):
        ClassProfile((9.0,) * 7, (0.1,) * 8, 850.0, 45.0)
    with pytest.raises(ValueError):
        ClassProfile((9.0,) * 8, (-0.1,) * 8, 850.0, 45.0)
    with pytest.raises(ValueError):
        ClassProfile((9.0,) * 8, (0.1,) * 8, 0.0, 45.0)
    with pytest.raises(ValueError):
        SyntheticCohort(rounds=3)
    with pytest.raises(ValueError):
        SyntheticCohort(n_participants=0)


def test_profiles_json_roundtrip():
    profs = default_profiles()
    back = profiles_from_json(profiles_to_json(profs))
    assert back == profs
    flat = flat_profiles()
    assert len(set(flat.values())) == 1  # all classes identical on purpose


def test_oracle_pipeline_matches_package_path():
    recs = list(generate_cohort(_small(n=2, rounds=1)))
    Xo, yo, go = oracle_pipeline(recs, truncate_seconds=3, window_capacity=10)
    rows = featurize_stream(truncate_head(recs, 3), window_capacity=10)
    X, y, g = to_matrix(rows, labeled_only=False)
    assert X.shape == Xo.shape
    assert np.max(np.abs(X - Xo)) <= 1e-9
    np.testing.assert_array_equal(y, yo)
    np.testing.assert_array_equal(g, go)


def test_oracle_pipeline_single_tick_and_empty():
    recs = list(generate_cohort(_small(n=1, rounds=1)))[:1]
    X, y, g = oracle_pipeline(recs)
    assert X.shape == (1, 9)
    X0, y0, g0 = oracle_pipeline([])
    assert X0.shape[0] == 0 and len(y0) == 0


def test_exam_mixture_counts_and_means():
    labels, difficulty = exam_label_mixture()
    low_lab = [l for l, d in zip(labels, difficulty) if d == "Low"]
    high_lab = [l for l, d in zip(labels, difficulty) if d == "High"]
    assert len(low_lab) == 20000 and len(high_lab) == 10000
    for lab, want in EXAM_LOW_COUNTS.items():
        assert low_lab.count(int(lab)) == want
    for lab, want in EXAM_HIGH_COUNTS.items():
        assert high_lab.count(int(lab)) == want
    # the two headline ratios and quantified means fall out exactly
    assert low_lab.count(1) / len(low_lab) * 100 == pytest.approx(78.57, abs=1e-9)
    assert high_lab.count(2) / len(high_lab) * 100 == pytest.approx(80.93, abs=1e-9)
    assert sum(low_lab) / len(low_lab) == pytest.approx(1.07, abs=1e-12)
    assert sum(high_lab) / len(high_lab) == pytest.approx(1.71, abs=1e-12)


def test_exam_mixture_shuffle_is_seeded():
    a = exam_label_mixture(seed=0)
    b = exam_label_mixture(seed=0)
    c = exam_label_mixture(seed=1)
    assert a == b
    assert a != c
    # reordering never changes the composition
    assert sorted(a[0]) == sorted(c[0])


def test_generate_exam_stream_layout():
    recs = list(generate_exam_stream(40, 20, seed=11))
    assert len(recs) == 60
    r1 = [r for r in recs if r.round == 1]
    r2 = [r for r in recs if r.round == 2]
    assert len(r1) == 40 and len(r2) == 20
    assert all(r.task is Task.EXAM_LOW for r in r1)
    assert all(r.task is Task.EXAM_HIGH for r in r2)
    assert [r.tick for r in r1] == list(range(40))
    assert all(r.participant_id == "E01" for r in recs)


def test_generate_exam_stream_deterministic():
    a = list(generate_exam_stream(30, 30, seed=2))
    b = list(generate_exam_stream(30, 30, seed=2))
    assert a == b


def test_inject_outliers_marks_and_scales():
    recs = list(generate_cohort(_small(n=1, rounds=1)))
    out, hits = inject_outliers(recs, p=0.1, scale=8.0, seed=3)
    assert len(out) == len(recs)
    assert 0 < len(hits) < len(recs)
    assert hits == sorted(set(hits))
    for i, (orig, new) in enumerate(zip(recs, out)):
        if i in hits:
            assert new.band_power == pytest.approx([v * 9.0 for v in orig.band_power])
        else:
            assert new == orig


def test_inject_outliers_p_zero_and_determinism():
    recs = list(generate_cohort(_small(n=1, rounds=1)))[:50]
    out, hits = inject_outliers(recs, p=0.0)
    assert hits == [] and out == recs
    a = inject_outliers(recs, p=0.2, seed=9)
    b = inject_outliers(recs, p=0.2, seed=9)
    assert a == b


def test_band_separation_pattern():
    # theta-range amplitude separates the classes; low beta does not
    recs = list(generate_cohort(_small(n=4, rounds=1)))
    rows = featurize_stream(recs)
    by_class = {lab: [] for lab in (LoadLabel.BASELINE, LoadLabel.LOW, LoadLabel.HIGH)}
    for r in rows:
        if r.label is not None:
            by_class[r.label].append(r)
    delta = kruskal_wallis([[r.amplitudes[0] for r in v] for v in by_class.values()])
    low_beta = kruskal_wallis([[r.amplitudes[4] for r in v] for v in by_class.values()])
    assert delta.p_value < 1e-6
    assert low_beta.p_value > 0.01
