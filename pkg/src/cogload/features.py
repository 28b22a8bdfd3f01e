"""Feature extraction: sqrt-amplitude transform per band plus rolling RMSSD.

Each tick becomes a 9-dimensional vector (8 band amplitudes + HRV).  HRV is
the RMSSD of a rolling FIFO of recent R-R intervals that accumulates across
ticks within one recording; during warm-up (fewer than 2 intervals seen) the
last computable value is carried forward, 0 before any exists, so every tick
yields 9 finite features.
"""

from __future__ import annotations

import collections
import csv
import dataclasses
import math
from typing import Iterable, Sequence

from .ingest import SampleRecord
from .labels import BAND_NAMES, N_BANDS, TASK_TO_LABEL, LoadLabel, Task, label_from_name

DEFAULT_WINDOW = 10
DEFAULT_TRUNCATE = 3

FEATURE_NAMES = [f"a_{b}" for b in BAND_NAMES] + ["hrv"]
FEATURES_CSV_HEADER = ["participant", "round", "task", "tick",
                       *FEATURE_NAMES, "label"]


class NegativePower(Exception):
    pass


class InsufficientData(Exception):
    pass


def amplitude_transform(powers: Sequence[float]) -> list[float]:
    """Elementwise square root, band order preserved."""
    if len(powers) != N_BANDS:
        raise ValueError(f"expected {N_BANDS} band powers, got {len(powers)}")
    out = []
    for i, p in enumerate(powers):
        if p < 0:
            raise NegativePower(f"band {BAND_NAMES[i]}: power {p} < 0")
        out.append(math.sqrt(p))
    return out


def rmssd(intervals: Sequence[float]) -> float:
    """Root mean square of the n-1 successive differences."""
    n = len(intervals)
    if n < 2:
        raise InsufficientData(f"need at least 2 intervals, got {n}")
    acc = 0.0
    for i in range(n - 1):
        d = intervals[i + 1] - intervals[i]
        acc += d * d
    return math.sqrt(acc / (n - 1))


class RmssdWindow:
    """Bounded FIFO of R-R intervals with rolling RMSSD."""

    def __init__(self, capacity: int = DEFAULT_WINDOW):
        if capacity < 2:
            raise ValueError("window capacity must be >= 2")
        self.capacity = capacity
        self._buf: collections.deque[float] = collections.deque(maxlen=capacity)
        self._last = 0.0

    def push(self, intervals: Iterable[float]) -> None:
        self._buf.extend(intervals)

    def value(self) -> float:
        """Current RMSSD; carries the last computable value through warm-up."""
        if len(self._buf) >= 2:
            self._last = rmssd(list(self._buf))
        return self._last


@dataclasses.dataclass
class FeatureRow:
    participant: str
    round: int
    task: Task
    tick: int
    amplitudes: list[float]
    hrv: float
    label: LoadLabel | None

    @property
    def vector(self) -> list[float]:
        return [*self.amplitudes, self.hrv]


def featurize_stream(records: Iterable[SampleRecord],
                     window_capacity: int = DEFAULT_WINDOW) -> list[FeatureRow]:
    """One FeatureRow per tick.  A fresh RMSSD window starts per participant;
    rounds within one participant share the window (one continuous sitting).
    """
    out: list[FeatureRow] = []
    window: RmssdWindow | None = None
    current: str | None = None
    for rec in records:
        if window is None or rec.participant_id != current:
            window = RmssdWindow(window_capacity)
            current = rec.participant_id
        window.push(rec.rr_intervals)
        out.append(FeatureRow(rec.participant_id, rec.round, rec.task, rec.tick,
                              amplitude_transform(rec.band_power),
                              window.value(), TASK_TO_LABEL.get(rec.task)))
    return out


def truncate_head(records: Sequence[SampleRecord], n_seconds: int = DEFAULT_TRUNCATE) -> list[SampleRecord]:
    """Drop the first n_seconds ticks of each contiguous (participant, round,
    task) segment; segment boundaries are detected by any key change."""
    if not 0 <= n_seconds <= 10:
        raise ValueError("n_seconds must be in [0, 10]")
    out = []
    key = None
    pos = 0
    for rec in records:
        k = (rec.participant_id, rec.round, rec.task)
        if k != key:
            key = k
            pos = 0
        if pos >= n_seconds:
            out.append(rec)
        pos += 1
    return out


def _fmt(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def write_features_csv(rows: Iterable[FeatureRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURES_CSV_HEADER)
        for r in rows:
            w.writerow([r.participant, r.round, r.task.value, r.tick,
                        *[_fmt(a) for a in r.amplitudes], _fmt(r.hrv),
                        r.label.display if r.label is not None else ""])


def read_features_csv(path: str) -> list[FeatureRow]:
    from .ingest import SchemaMismatch  # shared error type for tabular inputs

    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = next(rd)
        except StopIteration:
            raise SchemaMismatch("empty file, expected header row") from None
        if header != FEATURES_CSV_HEADER:
            raise SchemaMismatch(f"header {header!r} does not match features schema")
        rows = []
        for row in rd:
            label = label_from_name(row[13]) if row[13] else None
            rows.append(FeatureRow(row[0], int(row[1]), Task(row[2]), int(row[3]),
                                   [float(v) for v in row[4:12]], float(row[12]),
                                   label))
        return rows


def to_matrix(rows: Sequence[FeatureRow], labeled_only: bool = True):
    """Pack rows into numpy arrays: (X, y, groups).  y holds -1 where a row
    carries no ground-truth label (only possible with labeled_only=False)."""
    import numpy as np

    if labeled_only:
        rows = [r for r in rows if r.label is not None]
    X = np.array([r.vector for r in rows], dtype=np.float64)
    y = np.array([-1 if r.label is None else int(r.label) for r in rows], dtype=np.int64)
    groups = np.array([r.participant for r in rows])
    return X, y, groups
