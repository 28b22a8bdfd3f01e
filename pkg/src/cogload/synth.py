"""Synthetic physiological streams plus brute-force oracles.

Band powers are log-normal per class (non-negative, right-skewed, so the
sqrt-amplitude transform yields roughly symmetric features).  R-R intervals
come from a beat clock: each tick emits the 0-2 beats that fall inside its
one-second window, so the long-run beat rate matches 60000/mean_rr per
minute.  Everything is deterministic given the cohort seed.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .ingest import SampleRecord
from .labels import N_BANDS, TASK_TO_LABEL, LoadLabel, Task

# Rest / 1-Back / 2-Back block durations in seconds, run per round.
SCHEDULE = ((Task.REST, 90), (Task.ONE_BACK, 75), (Task.TWO_BACK, 95))
TICKS_PER_ROUND = sum(d for _, d in SCHEDULE)

# Beat intervals are clipped here so one tick never holds more than 2 beats
# and every interval passes the assembler's plausibility filter.
_RR_CLIP_LO = 550.0
_RR_CLIP_HI = 2000.0


@dataclasses.dataclass(frozen=True)
class ClassProfile:
    """Per-class signal statistics.  Band parameters are in log space."""

    band_log_mean: tuple[float, ...]
    band_log_std: tuple[float, ...]
    rr_mean_ms: float
    rr_std_ms: float

    def __post_init__(self):
        if len(self.band_log_mean) != N_BANDS or len(self.band_log_std) != N_BANDS:
            raise ValueError(f"band parameters must have {N_BANDS} entries")
        if any(s < 0 for s in self.band_log_std):
            raise ValueError("band stds must be >= 0")
        if self.rr_mean_ms <= 0:
            raise ValueError("rr_mean_ms must be positive")
        if self.rr_std_ms < 0:
            raise ValueError("rr_std_ms must be >= 0")

    @property
    def rmssd_target(self) -> float:
        """RMSSD of iid intervals with std sigma converges to sigma*sqrt(2)."""
        return self.rr_std_ms * math.sqrt(2.0)

    def to_dict(self) -> dict:
        return {"band_log_mean": list(self.band_log_mean),
                "band_log_std": list(self.band_log_std),
                "rr_mean_ms": self.rr_mean_ms, "rr_std_ms": self.rr_std_ms}


_BASE_LOG_MEAN = (11.0, 10.6, 9.9, 9.6, 9.2, 8.8, 8.4, 8.0)
_LOG_STD = 0.25

# Class shifts in log space, per band.  Separated bands move by >= 4.4 sigma
# per class step; low_beta and middle_gamma stay identical across classes so
# rank tests on them come out flat.
_CLASS_SHIFT = {
    LoadLabel.BASELINE: (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    LoadLabel.LOW: (1.2, 1.1, -0.2, -1.2, 0.0, 1.1, 1.15, 0.0),
    LoadLabel.HIGH: (2.4, 2.2, -0.4, -2.4, 0.0, 2.2, 2.3, 0.0),
}

_RR_PARAMS = {
    LoadLabel.BASELINE: (850.0, 45.0),
    LoadLabel.LOW: (780.0, 30.0),
    LoadLabel.HIGH: (700.0, 18.0),
}


def default_profiles() -> dict[LoadLabel, ClassProfile]:
    """Well-separated class profiles: higher load raises delta, theta,
    high_beta and low_gamma power, suppresses high_alpha, and lowers HRV."""
    out = {}
    for label in LoadLabel:
        mu = tuple(b + s for b, s in zip(_BASE_LOG_MEAN, _CLASS_SHIFT[label]))
        rr_mean, rr_std = _RR_PARAMS[label]
        out[label] = ClassProfile(mu, (_LOG_STD,) * N_BANDS, rr_mean, rr_std)
    return out


def flat_profiles() -> dict[LoadLabel, ClassProfile]:
    """One identical profile for every class: labels carry no signal, so any
    classifier above chance on this cohort is leaking."""
    base = ClassProfile(_BASE_LOG_MEAN, (_LOG_STD,) * N_BANDS, *_RR_PARAMS[LoadLabel.BASELINE])
    return {label: base for label in LoadLabel}


def profiles_to_json(profiles: Mapping[LoadLabel, ClassProfile]) -> dict:
    return {label.display: profiles[label].to_dict() for label in LoadLabel}


def profiles_from_json(data: Mapping) -> dict[LoadLabel, ClassProfile]:
    out = {}
    for label in LoadLabel:
        try:
            d = data[label.display]
        except KeyError:
            raise ValueError(f"profiles JSON missing class {label.display!r}") from None
        out[label] = ClassProfile(tuple(d["band_log_mean"]), tuple(d["band_log_std"]),
                                  float(d["rr_mean_ms"]), float(d["rr_std_ms"]))
    return out


@dataclasses.dataclass(frozen=True)
class SyntheticCohort:
    n_participants: int = 30
    rounds: int = 2
    seed: int = 7
    # Per-participant trait shifts: log-space band offset and R-R offset (ms),
    # drawn once per participant and applied across all classes.
    offset_scale: float = 0.1
    rr_offset_std_ms: float = 20.0

    def __post_init__(self):
        if self.n_participants < 1:
            raise ValueError("need at least 1 participant")
        if self.rounds not in (1, 2):
            raise ValueError("rounds must be 1 or 2")
        if self.offset_scale < 0 or self.rr_offset_std_ms < 0:
            raise ValueError("offset scales must be >= 0")


def generate_cohort(cohort: SyntheticCohort,
                    profiles: Mapping[LoadLabel, ClassProfile] | None = None) -> Iterator[SampleRecord]:
    """Yield 1 Hz SampleRecords for every participant, round, and scheduled
    block.  Ticks count seconds since session start, continuous across rounds."""
    if profiles is None:
        profiles = default_profiles()
    for label in LoadLabel:
        if label not in profiles:
            raise ValueError(f"missing profile for {label.display}")
    children = np.random.SeedSequence(cohort.seed).spawn(cohort.n_participants)
    for pi, child in enumerate(children):
        rng = np.random.default_rng(child)
        pid = f"P{pi + 1:02d}"
        band_off = rng.normal(0.0, cohort.offset_scale, N_BANDS) if cohort.offset_scale > 0 else np.zeros(N_BANDS)
        rr_off = rng.normal(0.0, cohort.rr_offset_std_ms) if cohort.rr_offset_std_ms > 0 else 0.0
        tick = 0
        beat_at = float(rng.random())  # phase of the first beat
        for rnd in range(1, cohort.rounds + 1):
            for task, duration in SCHEDULE:
                prof = profiles[TASK_TO_LABEL[task]]
                mu = np.asarray(prof.band_log_mean) + band_off
                sig = np.asarray(prof.band_log_std)
                for _ in range(duration):
                    z = rng.standard_normal(N_BANDS)
                    powers = [float(v) for v in np.exp(mu + sig * z)]
                    rrs = []
                    while beat_at < tick + 1:
                        iv = rng.normal(prof.rr_mean_ms + rr_off, prof.rr_std_ms)
                        iv = min(_RR_CLIP_HI, max(_RR_CLIP_LO, float(iv)))
                        rrs.append(iv)
                        beat_at += iv / 1000.0
                    yield SampleRecord(pid, rnd, task, tick, 0, powers, rrs)
                    tick += 1


def inject_outliers(records: Sequence[SampleRecord], p: float, scale: float = 8.0,
                    seed: int = 0) -> tuple[list[SampleRecord], list[int]]:
    """Additive artifact spikes: with probability p a tick's band powers gain
    scale times themselves.  Returns the new stream and the hit indices."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    hits = []
    for i, rec in enumerate(records):
        if rng.random() < p:
            spiked = [v + scale * v for v in rec.band_power]
            out.append(dataclasses.replace(rec, band_power=spiked))
            hits.append(i)
        else:
            out.append(rec)
    return out, hits


def oracle_pipeline(records: Iterable[SampleRecord], truncate_seconds: int = 0,
                    window_capacity: int = 10):
    """Deliberately naive re-implementation of truncation, sqrt transform and
    rolling RMSSD, kept as plain loops with no shared helpers, for
    cross-checking the features module.  Returns (X, y, groups); y holds -1
    for ticks whose task carries no load label."""
    kept = []
    seg = None
    run = 0
    for rec in records:
        key = (rec.participant_id, rec.round, rec.task)
        if key != seg:
            seg = key
            run = 0
        if run >= truncate_seconds:
            kept.append(rec)
        run += 1

    rows = []
    labels = []
    groups = []
    fifo: list[float] = []
    hrv = 0.0
    current = None
    for rec in kept:
        if rec.participant_id != current:
            current = rec.participant_id
            fifo = []
            hrv = 0.0
        for iv in rec.rr_intervals:
            fifo.append(float(iv))
            if len(fifo) > window_capacity:
                fifo.pop(0)
        if len(fifo) >= 2:
            acc = 0.0
            for i in range(len(fifo) - 1):
                d = fifo[i + 1] - fifo[i]
                acc += d * d
            hrv = (acc / (len(fifo) - 1)) ** 0.5
        rows.append([float(v) ** 0.5 for v in rec.band_power] + [hrv])
        lab = TASK_TO_LABEL.get(rec.task)
        labels.append(-1 if lab is None else int(lab))
        groups.append(rec.participant_id)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), N_BANDS + 1)
    return X, np.array(labels, dtype=np.int64), np.array(groups)


# Label counts reproducing the reported exam-difficulty outcome frequencies:
# the low block is 78.57% Low of 20,000 ticks (mean level exactly 1.07), the
# high block 80.93% High of 10,000 ticks (mean level exactly 1.71).
EXAM_LOW_COUNTS = {LoadLabel.LOW: 15714, LoadLabel.HIGH: 2843, LoadLabel.BASELINE: 1443}
EXAM_HIGH_COUNTS = {LoadLabel.HIGH: 8093, LoadLabel.LOW: 914, LoadLabel.BASELINE: 993}


def exam_label_mixture(seed: int = 0) -> tuple[list[int], list[str]]:
    """The two-block exam label stream, shuffled within each block.  Returns
    (predicted labels, difficulty tags) aligned per tick."""
    rng = np.random.default_rng(seed)
    blocks = []
    for counts in (EXAM_LOW_COUNTS, EXAM_HIGH_COUNTS):
        arr = np.concatenate([np.full(n, int(lab), dtype=np.int64)
                              for lab, n in counts.items()])
        rng.shuffle(arr)
        blocks.append(arr)
    labels = [int(v) for v in np.concatenate(blocks)]
    difficulty = ["Low"] * len(blocks[0]) + ["High"] * len(blocks[1])
    return labels, difficulty


def generate_exam_stream(n_low: int, n_high: int, seed: int = 11,
                         profiles: Mapping[LoadLabel, ClassProfile] | None = None,
                         participant: str = "E01") -> Iterator[SampleRecord]:
    """Two-block exam session (round 1 = low difficulty, round 2 = high) whose
    hidden per-tick load classes follow the exam mixture proportions."""
    if profiles is None:
        profiles = default_profiles()
    rng = np.random.default_rng(seed)
    tick = 0
    beat_at = float(rng.random())
    for rnd, task, n, counts in ((1, Task.EXAM_LOW, n_low, EXAM_LOW_COUNTS),
                                 (2, Task.EXAM_HIGH, n_high, EXAM_HIGH_COUNTS)):
        total = sum(counts.values())
        # largest-remainder apportionment of the block's class mix onto n ticks
        quota = {lab: c * n / total for lab, c in counts.items()}
        alloc = {lab: int(q) for lab, q in quota.items()}
        short = n - sum(alloc.values())
        for lab in sorted(quota, key=lambda l: quota[l] - alloc[l], reverse=True)[:short]:
            alloc[lab] += 1
        hidden = np.concatenate([np.full(c, int(lab), dtype=np.int64)
                                 for lab, c in alloc.items()])
        rng.shuffle(hidden)
        for h in hidden:
            prof = profiles[LoadLabel(int(h))]
            z = rng.standard_normal(N_BANDS)
            powers = [float(v) for v in np.exp(np.asarray(prof.band_log_mean) +
                                               np.asarray(prof.band_log_std) * z)]
            rrs = []
            while beat_at < tick + 1:
                iv = rng.normal(prof.rr_mean_ms, prof.rr_std_ms)
                iv = min(_RR_CLIP_HI, max(_RR_CLIP_LO, float(iv)))
                rrs.append(iv)
                beat_at += iv / 1000.0
            yield SampleRecord(participant, rnd, task, tick, 0, powers, rrs)
            tick += 1
