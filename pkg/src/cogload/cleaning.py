"""KNN-distance outlier filter applied to feature vectors before training.

Within each group (label class by default) features are standardized to zero
mean and unit variance per dimension, each point's mean Euclidean distance to
its k nearest neighbors (excluding itself) is computed, and points whose
statistic exceeds group_mean + c * group_std of that statistic are removed.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from . import _kernels

DEFAULT_K = 5
DEFAULT_C = 2.0
SCOPES = ("class", "participant", "global")


class DimensionMismatch(Exception):
    pass


class ClassTooSmall(Exception):
    pass


@dataclasses.dataclass
class OutlierReport:
    kept_indices: list[int]
    removed_indices: list[int]
    knn_mean_distance: list[float]  # per input point
    threshold: list[float]          # the cutoff applied to each point

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def euclidean(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise DimensionMismatch(f"dimension {len(a)} vs {len(b)}")
    acc = 0.0
    for x, y in zip(a, b):
        d = x - y
        acc += d * d
    return math.sqrt(acc)


def _standardize(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    out = X - mu
    nz = sd > 0
    out[:, nz] /= sd[nz]
    out[:, ~nz] = 0.0
    return out


def knn_filter(vectors, labels, k: int = DEFAULT_K, c: float = DEFAULT_C,
               scope: str = "class", groups=None) -> OutlierReport:
    """Flag outliers group by group; ties in neighbor distance break toward
    the lower index.  scope selects the grouping: per label class (default),
    per participant, or one global pool.
    """
    X = np.ascontiguousarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("expected a 2-d array of feature vectors")
    n = X.shape[0]
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    if y.shape[0] != n:
        raise DimensionMismatch(f"{n} vectors vs {y.shape[0]} labels")
    if k < 1:
        raise ValueError("k must be >= 1")
    if c <= 0:
        raise ValueError("c must be > 0")
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}")
    if scope == "participant":
        if groups is None:
            raise ValueError("scope='participant' requires groups")
        gkey = np.asarray(groups)
        if gkey.shape[0] != n:
            raise DimensionMismatch(f"{n} vectors vs {gkey.shape[0]} groups")
    elif scope == "class":
        gkey = y
    else:
        gkey = np.zeros(n, dtype=np.int64)

    stat = np.empty(n, dtype=np.float64)
    thr = np.empty(n, dtype=np.float64)
    removed_mask = np.zeros(n, dtype=bool)

    for gv in sorted(set(gkey.tolist())):
        members = np.nonzero(gkey == gv)[0]
        if members.size <= k:
            raise ClassTooSmall(
                f"group {gv!r} has {members.size} members, need > k={k}")
        Xg = _standardize(X[members])
        sg = _kernels.knn_mean_dist(Xg, k)
        mu = float(sg.mean())
        sd = float(sg.std())
        cut = mu + c * sd
        stat[members] = sg
        thr[members] = cut
        removed_mask[members] = sg > cut

    removed = np.nonzero(removed_mask)[0]
    kept = np.nonzero(~removed_mask)[0]
    return OutlierReport(kept.tolist(), removed.tolist(),
                         stat.tolist(), thr.tolist())
