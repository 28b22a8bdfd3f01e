"""Dataset splitting, leave-one-group-out cross-validation, and per-class
metric reports."""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from . import forest
from .forest import ForestConfig, ForestModel
from .labels import LoadLabel


class LengthMismatch(Exception):
    pass


class ClassTooSmall(Exception):
    pass


class SingleGroup(Exception):
    pass


def _class_name(c: int) -> str:
    try:
        return LoadLabel(c).display
    except ValueError:
        return str(c)


@dataclasses.dataclass
class MetricsReport:
    classes: list[int]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    accuracy: float
    macro_avg: tuple[float, float, float]
    weighted_avg: tuple[float, float, float]
    confusion: list[list[int]]  # rows = true, cols = predicted
    zero_division: list[str]    # "<class>:<metric>" markers for 0/0 cases

    @property
    def total(self) -> int:
        return sum(self.support)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def format_text(self) -> str:
        names = [_class_name(c) for c in self.classes]
        width = max(12, *(len(n) for n in names))
        head = f"{'':>{width}}  precision    recall  f1-score   support"
        lines = [head, ""]
        for i, name in enumerate(names):
            lines.append(f"{name:>{width}}  {self.precision[i]:9.2f} {self.recall[i]:9.2f} "
                         f"{self.f1[i]:9.2f} {self.support[i]:9d}")
        lines.append("")
        lines.append(f"{'accuracy':>{width}}  {'':9} {'':9} {self.accuracy:9.2f} {self.total:9d}")
        for tag, (p, r, f) in (("macro avg", self.macro_avg),
                               ("weighted avg", self.weighted_avg)):
            lines.append(f"{tag:>{width}}  {p:9.2f} {r:9.2f} {f:9.2f} {self.total:9d}")
        return "\n".join(lines)


def score(truth: Sequence, predicted: Sequence) -> MetricsReport:
    """Per-class precision/recall/f1/support plus macro and support-weighted
    averages.  Zero-denominator metrics yield 0 and are flagged."""
    t = [int(v) for v in truth]
    p = [int(v) for v in predicted]
    if len(t) != len(p):
        raise LengthMismatch(f"{len(t)} truth vs {len(p)} predicted")
    if not t:
        raise LengthMismatch("empty inputs")

    classes = sorted(set(t) | set(p))
    pos = {c: i for i, c in enumerate(classes)}
    k = len(classes)
    conf = [[0] * k for _ in range(k)]
    for a, b in zip(t, p):
        conf[pos[a]][pos[b]] += 1

    precision, recall, f1, support = [], [], [], []
    flags = []
    for i, c in enumerate(classes):
        tp = conf[i][i]
        col = sum(conf[r][i] for r in range(k))
        row = sum(conf[i])
        if col > 0:
            precision.append(tp / col)
        else:
            precision.append(0.0)
            flags.append(f"{c}:precision")
        if row > 0:
            recall.append(tp / row)
        else:
            recall.append(0.0)
            flags.append(f"{c}:recall")
        if precision[i] + recall[i] > 0:
            f1.append(2 * precision[i] * recall[i] / (precision[i] + recall[i]))
        else:
            f1.append(0.0)
            flags.append(f"{c}:f1")
        support.append(row)

    total = len(t)
    accuracy = sum(conf[i][i] for i in range(k)) / total
    macro = (sum(precision) / k, sum(recall) / k, sum(f1) / k)
    weighted = (sum(p_ * s for p_, s in zip(precision, support)) / total,
                sum(r_ * s for r_, s in zip(recall, support)) / total,
                sum(f_ * s for f_, s in zip(f1, support)) / total)
    return MetricsReport(classes, precision, recall, f1, support, accuracy,
                         macro, weighted, conf, flags)


def split_80_20(features, labels, groups, seed: int):
    """Stratified deterministic split: each class contributes test samples
    proportionally (floor plus largest-remainder up to round(0.2 * N)).
    Returns ascending (train_indices, test_indices)."""
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    n = y.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    classes = sorted(set(y.tolist()))
    for c in classes:
        if int((y == c).sum()) < 5:
            raise ClassTooSmall(f"class {c} has fewer than 5 samples")

    total_test = int(round(0.2 * n))
    exact = {c: 0.2 * int((y == c).sum()) for c in classes}
    take = {c: math.floor(exact[c]) for c in classes}
    shortfall = total_test - sum(take.values())
    # hand out the remainder by largest fractional part, lower class first on ties
    order = sorted(classes, key=lambda c: (-(exact[c] - take[c]), c))
    for c in order[:shortfall]:
        take[c] += 1

    rng = np.random.default_rng(seed)
    test_parts = []
    for c in classes:
        members = np.nonzero(y == c)[0]
        perm = rng.permutation(members.size)
        test_parts.append(members[perm[:take[c]]])
    test_idx = np.sort(np.concatenate(test_parts))
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    return np.nonzero(mask)[0], test_idx


@dataclasses.dataclass
class FoldResult:
    held_out_group: str
    accuracy: float
    report: MetricsReport


@dataclasses.dataclass
class CvResult:
    folds: list[FoldResult]
    mean_accuracy: float
    std_accuracy: float  # population std over folds

    def to_dict(self) -> dict:
        return {"mean_accuracy": self.mean_accuracy,
                "std_accuracy": self.std_accuracy,
                "folds": [{"group": f.held_out_group, "accuracy": f.accuracy,
                           "report": f.report.to_dict()} for f in self.folds]}


def logo_cv(features, labels, groups, config: ForestConfig = ForestConfig()) -> CvResult:
    """One fold per distinct group: train on every other group, test on it.
    Folds run in ascending group order."""
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    g = np.asarray(groups)
    if not (X.shape[0] == y.shape[0] == g.shape[0]):
        raise LengthMismatch("features, labels, and groups differ in length")
    distinct = sorted(set(g.tolist()))
    if len(distinct) < 2:
        raise SingleGroup("leave-one-group-out needs at least 2 groups")

    folds = []
    for group in distinct:
        test_mask = g == group
        model = forest.fit(X[~test_mask], y[~test_mask], config)
        pred = forest.predict(model, X[test_mask])
        rep = score(y[test_mask], pred)
        folds.append(FoldResult(str(group), rep.accuracy, rep))

    accs = np.array([f.accuracy for f in folds])
    return CvResult(folds, float(accs.mean()), float(accs.std()))


def train_test_report(features, labels, groups, seed: int,
                      config: ForestConfig = ForestConfig()):
    """Convenience holdout protocol: stratified 80/20, fit on train, report
    on test.  Returns (model, MetricsReport)."""
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    train_idx, test_idx = split_80_20(X, y, groups, seed)
    model = forest.fit(X[train_idx], y[train_idx], config)
    pred = forest.predict(model, X[test_idx])
    return model, score(y[test_idx], pred)
