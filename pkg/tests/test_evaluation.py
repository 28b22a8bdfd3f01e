"""Metrics, the stratified holdout split, and leave-one-group-out CV."""
from __future__ import annotations

import numpy as np
import pytest

from cogload.evaluation import (
    ClassTooSmall,
    LengthMismatch,
    SingleGroup,
    logo_cv,
    score,
    split_80_20,
    train_test_report,
)
from cogload.forest import ForestConfig


def test_score_hand_computed():
    truth = [0, 0, 0, 1, 1, 2, 2, 2, 2, 2]
    pred = [0, 0, 1, 1, 1, 2, 2, 2, 0, 1]
    rep = score(truth, pred)
    assert rep.classes == [0, 1, 2]
    assert rep.confusion == [[2, 1, 0], [0, 2, 0], [1, 1, 3]]
    # class 0: tp=2, predicted 3, actual 3
    assert rep.precision[0] == pytest.approx(2 / 3)
    assert rep.recall[0] == pytest.approx(2 / 3)
    # class 1: tp=2, predicted 4, actual 2
    assert rep.precision[1] == pytest.approx(0.5)
    assert rep.recall[1] == pytest.approx(1.0)
    assert rep.f1[1] == pytest.approx(2 * 0.5 * 1.0 / 1.5)
    # class 2: tp=3, predicted 3, actual 5
    assert rep.precision[2] == pytest.approx(1.0)
    assert rep.recall[2] == pytest.approx(0.6)
    assert rep.support == [3, 2, 5]
    assert rep.accuracy == pytest.approx(0.7)
    assert rep.total == 10


def test_score_weighted_average_identity():
    truth = [0, 0, 0, 1, 1, 2, 2, 2, 2, 2]
    pred = [0, 0, 1, 1, 1, 2, 2, 2, 0, 1]
    rep = score(truth, pred)
    for j in range(3):
        comp = (rep.precision, rep.recall, rep.f1)[j]
        expect = sum(v * s for v, s in zip(comp, rep.support)) / rep.total
        assert rep.weighted_avg[j] == pytest.approx(expect, abs=1e-9)
    assert rep.macro_avg[0] == pytest.approx(sum(rep.precision) / 3, abs=1e-9)


def test_score_zero_division_flags():
    # class 2 never predicted: its precision is 0/0; class 3 never true
    rep = score([0, 0, 2], [0, 0, 3])
    assert "2:precision" in rep.zero_division
    assert "2:f1" in rep.zero_division
    assert "3:recall" in rep.zero_division
    i2 = rep.classes.index(2)
    assert rep.precision[i2] == 0.0 and rep.f1[i2] == 0.0


def test_score_length_checks():
    with pytest.raises(LengthMismatch):
        score([0, 1], [0])
    with pytest.raises(LengthMismatch):
        score([], [])


def test_score_perfect():
    rep = score([0, 1, 2], [0, 1, 2])
    assert rep.accuracy == 1.0
    assert rep.zero_division == []
    assert rep.macro_avg == (1.0, 1.0, 1.0)


def test_format_text_contains_table():
    rep = score([0, 1, 2, 0], [0, 1, 2, 1])
    txt = rep.format_text()
    assert "precision" in txt and "recall" in txt and "f1-score" in txt
    assert "Baseline" in txt and "Low" in txt and "High" in txt
    assert "macro avg" in txt and "weighted avg" in txt


def test_format_text_unknown_class_uses_number():
    txt = score([7, 7], [7, 7]).format_text()
    assert "7" in txt


def test_split_sizes_and_stratification():
    y = np.array([0] * 335 + [1] * 332 + [2] * 333)
    train, test = split_80_20(np.zeros((1000, 2)), y, None, seed=3)
    assert len(test) == 200 and len(train) == 800
    counts = np.bincount(y[test], minlength=3)
    assert counts.tolist() == [67, 66, 67]


def test_split_deterministic_and_disjoint():
    y = np.array([0] * 40 + [1] * 40)
    t1 = split_80_20(np.zeros((80, 1)), y, None, seed=9)
    t2 = split_80_20(np.zeros((80, 1)), y, None, seed=9)
    np.testing.assert_array_equal(t1[0], t2[0])
    np.testing.assert_array_equal(t1[1], t2[1])
    merged = np.sort(np.concatenate(t1))
    np.testing.assert_array_equal(merged, np.arange(80))
    t3 = split_80_20(np.zeros((80, 1)), y, None, seed=10)
    assert not np.array_equal(t1[1], t3[1])


def test_split_small_class_raises():
    y = np.array([0] * 20 + [1] * 4)
    with pytest.raises(ClassTooSmall):
        split_80_20(np.zeros((24, 1)), y, None, seed=0)


def test_split_empty_raises():
    with pytest.raises(ValueError):
        split_80_20(np.zeros((0, 1)), [], None, seed=0)


def _grouped_blobs(n_groups=10, per_group=30, seed=1):
    rng = np.random.default_rng(seed)
    X, y, g = [], [], []
    for gi in range(n_groups):
        for ci, center in enumerate(((0.0, 0.0), (5.0, 5.0))):
            pts = rng.normal(center, 1.0, size=(per_group, 2))
            X.append(pts)
            y.extend([ci] * per_group)
            g.extend([f"P{gi:02d}"] * per_group)
    return np.vstack(X), np.array(y), np.array(g)


def test_logo_cv_fold_structure_and_accuracy():
    X, y, g = _grouped_blobs()
    res = logo_cv(X, y, g, ForestConfig(n_estimators=15))
    assert len(res.folds) == 10
    assert [f.held_out_group for f in res.folds] == sorted(set(g.tolist()))
    assert res.mean_accuracy >= 0.95
    accs = np.array([f.accuracy for f in res.folds])
    assert res.mean_accuracy == pytest.approx(float(accs.mean()))
    assert res.std_accuracy == pytest.approx(float(accs.std()))
    # each fold scored exactly the held-out rows
    assert all(f.report.total == 60 for f in res.folds)


def test_logo_cv_single_group_raises():
    X = np.zeros((10, 2))
    with pytest.raises(SingleGroup):
        logo_cv(X, np.zeros(10, dtype=int), np.array(["A"] * 10))


def test_logo_cv_length_mismatch():
    with pytest.raises(LengthMismatch):
        logo_cv(np.zeros((5, 2)), np.zeros(4, dtype=int), np.array(["A"] * 5))


def test_cv_result_to_dict():
    X, y, g = _grouped_blobs(n_groups=2, per_group=10)
    res = logo_cv(X, y, g, ForestConfig(n_estimators=5))
    d = res.to_dict()
    assert set(d) == {"mean_accuracy", "std_accuracy", "folds"}
    assert len(d["folds"]) == 2
    assert {"group", "accuracy", "report"} <= set(d["folds"][0])


def test_train_test_report_runs_holdout():
    X, y, g = _grouped_blobs(n_groups=3, per_group=40)
    model, rep = train_test_report(X, y, g, seed=4,
                                   config=ForestConfig(n_estimators=15))
    assert rep.total == round(0.2 * len(y))
    assert rep.accuracy >= 0.95
    assert model.n_features == 2
