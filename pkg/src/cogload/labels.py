"""Task and load-level vocabulary shared across the pipeline."""

from __future__ import annotations

import enum


class Task(enum.Enum):
    """What the subject was doing during a tick."""

    REST = "Rest"
    ONE_BACK = "OneBack"
    TWO_BACK = "TwoBack"
    EXAM_LOW = "ExamLow"
    EXAM_HIGH = "ExamHigh"
    UNLABELED = "Unlabeled"


class LoadLabel(enum.IntEnum):
    """Ordinal cognitive-load class. Integer values double as the quantified level."""

    BASELINE = 0
    LOW = 1
    HIGH = 2

    @property
    def display(self) -> str:
        return _DISPLAY[self]


_DISPLAY = {
    LoadLabel.BASELINE: "Baseline",
    LoadLabel.LOW: "Low",
    LoadLabel.HIGH: "High",
}

_FROM_DISPLAY = {v: k for k, v in _DISPLAY.items()}

# Which tasks carry a ground-truth load level.
TASK_TO_LABEL = {
    Task.REST: LoadLabel.BASELINE,
    Task.ONE_BACK: LoadLabel.LOW,
    Task.TWO_BACK: LoadLabel.HIGH,
}

# Exam difficulty quantification used by the trend statistics.
DIFFICULTY_VALUE = {"Low": 1, "High": 2}

TASK_TO_DIFFICULTY = {
    Task.EXAM_LOW: "Low",
    Task.EXAM_HIGH: "High",
}

BAND_NAMES = (
    "delta",
    "theta",
    "low_alpha",
    "high_alpha",
    "low_beta",
    "high_beta",
    "low_gamma",
    "middle_gamma",
)

N_BANDS = len(BAND_NAMES)
N_FEATURES = N_BANDS + 1  # eight band amplitudes plus HRV


def label_from_name(name: str) -> LoadLabel:
    """Parse 'Baseline' / 'Low' / 'High' (case-sensitive, as written in logs)."""
    try:
        return _FROM_DISPLAY[name]
    except KeyError:
        raise ValueError(f"unknown load label: {name!r}") from None


def task_from_name(name: str) -> Task:
    try:
        return Task(name)
    except ValueError:
        raise ValueError(f"unknown task: {name!r}") from None
