"""Live session orchestration: drives the scheduled protocol or free-form
exam sessions, classifies each tick with a loaded forest, persists the log,
and publishes a per-second event stream.

The core (SessionPlan / SessionRunner / run_session / classify_file) is
synchronous and deterministic; the web-socket app wraps it.  All messages on
the wire are JSON objects with a `v` field:

  events   {type: "tick" | "phase" | "gap", ...}   broadcast to subscribers
  commands {type: "mark_phase" | "start" | "stop" | "tlx_submit", ...}
  replies  {type: "ack" | "error", cmd: ..., ...}  to the commanding client

A phase event with phase = null signals session end.  Gap events carry
reason "stall" (source silent > 3 s) or "dropped" (slow subscriber; oldest
events were discarded).
"""

from __future__ import annotations

import asyncio
import csv
import dataclasses
import json
import time
from typing import Iterable, Iterator, Mapping, Sequence

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .evaluation import MetricsReport, score
from .features import (DEFAULT_WINDOW, FEATURE_NAMES, RmssdWindow,
                       amplitude_transform)
from .forest import ForestModel, predict_proba
from .ingest import CSV_HEADER, SampleRecord, read_csv
from .labels import (TASK_TO_DIFFICULTY, TASK_TO_LABEL, LoadLabel, Task,
                     task_from_name)
from .stats import TLX_SUBSCALES, ChiSquareResult, chi_square_independence, tlx_composite

PROTOCOL_VERSION = 1
STALL_AFTER_S = 3.0


class UnknownPhase(Exception):
    pass


class SessionEnded(Exception):
    pass


class ModelDimMismatch(Exception):
    pass


# ------------------------------------------------------------------ planning


@dataclasses.dataclass(frozen=True)
class Phase:
    name: str
    task: Task
    duration: int
    requirement: str = "none"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("phase duration must be positive")

    @property
    def label(self) -> LoadLabel | None:
        """Ground-truth load level, None for unlabeled phases (e.g. exams)."""
        return TASK_TO_LABEL.get(self.task)


@dataclasses.dataclass(frozen=True)
class SessionPlan:
    phases: tuple[Phase, ...]
    rounds: int = 1

    def __post_init__(self):
        if not self.phases:
            raise ValueError("plan needs at least one phase")
        if self.rounds not in (1, 2):
            raise ValueError("rounds must be 1 or 2")
        names = [p.name for p in self.phases]
        if len(set(names)) != len(names):
            raise ValueError("phase names must be unique")

    def phase_index(self, name: str) -> int:
        for i, p in enumerate(self.phases):
            if p.name == name:
                return i
        raise UnknownPhase(f"no phase named {name!r}")

    @property
    def ticks_per_round(self) -> int:
        return sum(p.duration for p in self.phases)

    def to_dict(self) -> dict:
        return {"rounds": self.rounds,
                "phases": [{"name": p.name, "task": p.task.value,
                            "duration": p.duration, "requirement": p.requirement}
                           for p in self.phases]}

    @staticmethod
    def from_dict(data: Mapping) -> "SessionPlan":
        phases = tuple(Phase(d["name"], task_from_name(d["task"]), int(d["duration"]),
                             d.get("requirement", "none"))
                       for d in data["phases"])
        return SessionPlan(phases, int(data.get("rounds", 1)))

    @staticmethod
    def default() -> "SessionPlan":
        return SessionPlan((Phase("Rest", Task.REST, 90, "none"),
                            Phase("1-Back", Task.ONE_BACK, 75, ">60%"),
                            Phase("2-Back", Task.TWO_BACK, 95, ">50%")), rounds=2)


def load_plan(path: str) -> SessionPlan:
    with open(path) as fh:
        return SessionPlan.from_dict(json.load(fh))


def save_plan(plan: SessionPlan, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(plan.to_dict(), fh, indent=2)
        fh.write("\n")


# -------------------------------------------------------------------- events


@dataclasses.dataclass
class LiveEvent:
    tick: int
    round: int
    phase: str
    label: LoadLabel | None
    quality: int
    features: list[float]
    predicted: LoadLabel | None
    proba: dict[str, float] | None

    def to_json(self) -> dict:
        return {"v": PROTOCOL_VERSION, "type": "tick", "tick": self.tick,
                "round": self.round, "phase": self.phase,
                "label": self.label.display if self.label is not None else None,
                "quality": self.quality, "features": list(self.features),
                "predicted": self.predicted.display if self.predicted is not None else None,
                "proba": self.proba}


@dataclasses.dataclass
class PhaseEvent:
    tick: int
    round: int
    phase: str | None   # None: session ended
    label: LoadLabel | None

    def to_json(self) -> dict:
        return {"v": PROTOCOL_VERSION, "type": "phase", "tick": self.tick,
                "round": self.round, "phase": self.phase,
                "label": self.label.display if self.label is not None else None}


@dataclasses.dataclass
class GapEvent:
    reason: str          # "stall" or "dropped"
    after_tick: int
    missed: int = 0

    def to_json(self) -> dict:
        return {"v": PROTOCOL_VERSION, "type": "gap", "reason": self.reason,
                "after_tick": self.after_tick, "missed": self.missed}


# -------------------------------------------------------------------- runner


class SessionRunner:
    """Strictly ordered pipeline for one session: phase bookkeeping,
    featurization with a window shared across phases and rounds, optional
    classification, and CSV logging.  Operator marks take effect at the next
    tick boundary and override the plan timer."""

    def __init__(self, plan: SessionPlan, model: ForestModel | None = None,
                 log_path: str | None = None, window_capacity: int = DEFAULT_WINDOW):
        if model is not None and model.n_features != len(FEATURE_NAMES):
            raise ModelDimMismatch(f"model expects {model.n_features} features, "
                                   f"stream provides {len(FEATURE_NAMES)}")
        self.plan = plan
        self.model = model
        self.window = RmssdWindow(window_capacity)
        self.tick = 0
        self.round = 1
        self.ended = False
        self.records: list[SampleRecord] = []
        self._pi = 0
        self._in_phase = 0
        self._pending: str | None = None
        self._started = False
        self._log = open(log_path, "w", newline="") if log_path else None
        self._csv = None
        if self._log:
            self._csv = csv.writer(self._log)
            self._csv.writerow(CSV_HEADER)

    @property
    def phase(self) -> Phase:
        return self.plan.phases[self._pi]

    def mark_phase(self, name: str) -> int:
        """Queue a transition; returns the tick it will apply at.  "abort"
        ends the session at the next boundary.  Idempotent within one tick."""
        if self.ended:
            raise SessionEnded("session already ended")
        if name != "abort":
            self.plan.phase_index(name)  # raises UnknownPhase
        self._pending = name
        return self.tick

    def _advance(self) -> bool:
        """Apply pending mark or expired timer.  True on phase transition;
        sets ended when the plan is exhausted or aborted."""
        if not self._started:
            self._started = True
            return True
        if self._pending is not None:
            name, self._pending = self._pending, None
            if name == "abort":
                self.ended = True
                return False
            self._pi = self.plan.phase_index(name)
            self._in_phase = 0
            return True
        if self._in_phase >= self.phase.duration:
            if self._pi + 1 < len(self.plan.phases):
                self._pi += 1
            elif self.round < self.plan.rounds:
                self.round += 1
                self._pi = 0
            else:
                self.ended = True
                return False
            self._in_phase = 0
            return True
        return False

    def push(self, rec: SampleRecord) -> list:
        """Process one 1 Hz record; returns the events it produced (a phase
        event first when a transition happened, then the tick event)."""
        if self.ended:
            raise SessionEnded("session already ended")
        events: list = []
        transitioned = self._advance()
        if self.ended:
            events.append(PhaseEvent(self.tick, self.round, None, None))
            self._close_log()
            return events
        phase = self.phase
        if transitioned:
            events.append(PhaseEvent(self.tick, self.round, phase.name, phase.label))

        self.window.push(rec.rr_intervals)
        vec = amplitude_transform(rec.band_power) + [self.window.value()]
        predicted = None
        proba = None
        if self.model is not None:
            p = predict_proba(self.model, vec)
            by_class = {LoadLabel(int(c)).display: float(v)
                        for c, v in zip(self.model.classes, p)}
            proba = {lab.display: by_class.get(lab.display, 0.0) for lab in LoadLabel}
            best = max(range(len(p)), key=lambda i: (p[i], -i))
            predicted = LoadLabel(int(self.model.classes[best]))

        logged = dataclasses.replace(rec, round=self.round, task=phase.task,
                                     tick=self.tick)
        self.records.append(logged)
        if self._csv:
            from .ingest import _fmt
            self._csv.writerow([logged.participant_id, logged.round,
                                logged.task.value, logged.tick, logged.quality,
                                *[_fmt(v) for v in logged.band_power],
                                ";".join(_fmt(v) for v in logged.rr_intervals)])
            self._log.flush()
        events.append(LiveEvent(self.tick, self.round, phase.name, phase.label,
                                rec.quality, vec, predicted, proba))
        self.tick += 1
        self._in_phase += 1
        return events

    def finish(self) -> list:
        """End the session explicitly (source exhausted or stopped)."""
        if self.ended:
            return []
        self.ended = True
        self._close_log()
        return [PhaseEvent(self.tick, self.round, None, None)]

    def _close_log(self):
        if self._log:
            self._log.close()
            self._log = None
            self._csv = None


def run_session(plan: SessionPlan, source: Iterable[SampleRecord],
                model: ForestModel | None = None, log_path: str | None = None,
                window_capacity: int = DEFAULT_WINDOW,
                marks: Mapping[int, str] | None = None):
    """Drive a full session from an iterable source.  `marks` schedules
    operator commands: {tick: phase_name} delivered while that tick is
    current.  Returns (records, events)."""
    runner = SessionRunner(plan, model, log_path, window_capacity)
    events: list = []
    marks = dict(marks or {})
    for rec in source:
        if runner.ended:
            break
        if runner.tick in marks:
            runner.mark_phase(marks.pop(runner.tick))
        events.extend(runner.push(rec))
    events.extend(runner.finish())
    return runner.records, events


# ------------------------------------------------------------------ batch io

PREDICTIONS_CSV_HEADER = ["participant", "round", "task", "tick",
                          *FEATURE_NAMES, "label", "predicted",
                          "p_baseline", "p_low", "p_high"]


@dataclasses.dataclass
class ClassifyResult:
    n_ticks: int
    out_path: str
    report: MetricsReport | None
    difficulty_table: dict | None
    chi_square: ChiSquareResult | None

    def to_dict(self) -> dict:
        return {"n_ticks": self.n_ticks, "out_path": self.out_path,
                "report": self.report.to_dict() if self.report else None,
                "difficulty_table": self.difficulty_table,
                "chi_square": self.chi_square.to_dict() if self.chi_square else None}


def classify_file(model: ForestModel, csv_in: str, csv_out: str,
                  window_capacity: int = DEFAULT_WINDOW,
                  truncate_seconds: int = 0) -> ClassifyResult:
    """Classify a session CSV tick by tick.  Defaults mirror the live path
    (no truncation, window 10), so replaying a session log reproduces the
    exact predictions that were published live.  When ground-truth labels
    exist a metrics report is added; when exam-difficulty phases exist, a
    difficulty-by-prediction chi-square is run."""
    from .features import featurize_stream, truncate_head
    from .ingest import _fmt

    records = read_csv(csv_in)
    if truncate_seconds:
        records = truncate_head(records, truncate_seconds)
    rows = featurize_stream(records, window_capacity)
    if rows and model.n_features != len(rows[0].vector):
        raise ModelDimMismatch(f"model expects {model.n_features} features")

    import numpy as np

    preds: list[LoadLabel] = []
    with open(csv_out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICTIONS_CSV_HEADER)
        for row in rows:
            p = predict_proba(model, row.vector)
            by_class = {int(c): float(v) for c, v in zip(model.classes, p)}
            full = [by_class.get(int(lab), 0.0) for lab in LoadLabel]
            best = max(range(len(p)), key=lambda i: (p[i], -i))
            pred = LoadLabel(int(model.classes[best]))
            preds.append(pred)
            w.writerow([row.participant, row.round, row.task.value, row.tick,
                        *[_fmt(v) for v in row.vector],
                        row.label.display if row.label is not None else "",
                        pred.display, *[_fmt(v) for v in full]])

    labeled = [(int(r.label), int(p)) for r, p in zip(rows, preds) if r.label is not None]
    report = score([a for a, _ in labeled], [b for _, b in labeled]) if labeled else None

    table = None
    chi = None
    tagged = [(TASK_TO_DIFFICULTY[r.task], int(p)) for r, p in zip(rows, preds)
              if r.task in TASK_TO_DIFFICULTY]
    if tagged:
        levels = sorted({d for d, _ in tagged}, key=lambda d: DIFF_ORDER.index(d))
        counts = {d: {lab: 0 for lab in LoadLabel} for d in levels}
        for d, p in tagged:
            counts[d][LoadLabel(p)] += 1
        cols = [lab for lab in LoadLabel if any(counts[d][lab] for d in levels)]
        table = {"rows": levels, "cols": [lab.display for lab in cols],
                 "counts": [[counts[d][lab] for lab in cols] for d in levels]}
        if len(levels) >= 2 and len(cols) >= 2:
            chi = chi_square_independence(table["counts"])
    return ClassifyResult(len(rows), csv_out, report, table, chi)


DIFF_ORDER = ("Low", "High")


# ------------------------------------------------------------------- web app


class _Subscriber:
    def __init__(self, maxsize: int):
        self.queue: "asyncio.Queue[dict]" = asyncio.Queue(maxsize=maxsize)
        self.lost = 0
        self.last_tick = -1


class EventHub:
    """Fan-out with per-subscriber bounded queues.  A slow subscriber loses
    oldest events and is told so by a gap message; publishers never block."""

    def __init__(self, maxsize: int = 256):
        self.maxsize = maxsize
        self._subs: list[_Subscriber] = []

    def subscribe(self) -> _Subscriber:
        sub = _Subscriber(self.maxsize)
        self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        if sub in self._subs:
            self._subs.remove(sub)

    def publish(self, messages: Sequence[dict]) -> None:
        for sub in self._subs:
            for msg in messages:
                try:
                    sub.queue.put_nowait(msg)
                except asyncio.QueueFull:
                    sub.queue.get_nowait()
                    sub.lost += 1
                    sub.queue.put_nowait(msg)
                if msg.get("type") == "tick":
                    sub.last_tick = msg["tick"]

    async def next_message(self, sub: _Subscriber) -> dict:
        if sub.lost:
            missed, sub.lost = sub.lost, 0
            return GapEvent("dropped", sub.last_tick, missed).to_json()
        return await sub.queue.get()


def _error(cmd: str, detail: str) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "error", "cmd": cmd, "detail": detail}


def _ack(cmd: str, **extra) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "ack", "cmd": cmd, **extra}


def create_app(plan: SessionPlan, source: Iterable[SampleRecord],
               model: ForestModel | None = None, log_path: str | None = None,
               tick_interval: float = 1.0, queue_size: int = 256,
               tlx_path: str | None = None):
    """FastAPI app exposing /ws (events + commands) and /healthz.  The
    session starts on the first `start` command; the source iterator is
    pulled once per tick_interval seconds."""
    app = FastAPI()
    hub = EventHub(queue_size)
    state = {"runner": None, "task": None, "stall_task": None,
             "last_emit": None, "tlx": []}

    def runner() -> SessionRunner | None:
        return state["runner"]

    async def pump_source():
        it: Iterator[SampleRecord] = iter(source)
        r = runner()
        try:
            for rec in it:
                if r.ended:
                    break
                events = r.push(rec)
                state["last_emit"] = time.monotonic()
                hub.publish([e.to_json() for e in events])
                await asyncio.sleep(tick_interval)
            hub.publish([e.to_json() for e in r.finish()])
        except asyncio.CancelledError:
            hub.publish([e.to_json() for e in r.finish()])
            raise

    async def stall_watchdog():
        stalled = False
        while True:
            await asyncio.sleep(max(tick_interval, 0.5))
            r = runner()
            if r is None or r.ended:
                break
            last = state["last_emit"]
            if last is None:
                continue
            silent = time.monotonic() - last
            if silent > STALL_AFTER_S and not stalled:
                stalled = True
                hub.publish([GapEvent("stall", r.tick - 1).to_json()])
            elif silent <= STALL_AFTER_S:
                stalled = False

    def handle_command(raw: str) -> dict:
        try:
            cmd = json.loads(raw)
        except json.JSONDecodeError:
            return _error("?", "invalid JSON")
        if not isinstance(cmd, dict) or "type" not in cmd:
            return _error("?", "command must be an object with a type field")
        kind = cmd["type"]
        if cmd.get("v") != PROTOCOL_VERSION:
            return _error(kind, f"unsupported protocol version {cmd.get('v')!r}")
        r = runner()
        if kind == "start":
            if state["task"] is not None:
                return _error("start", "session already started")
            state["runner"] = SessionRunner(plan, model, log_path)
            state["last_emit"] = time.monotonic()
            state["task"] = asyncio.create_task(pump_source())
            state["stall_task"] = asyncio.create_task(stall_watchdog())
            return _ack("start")
        if kind == "stop":
            if r is None:
                return _error("stop", "no active session")
            if state["task"] is not None:
                state["task"].cancel()
                state["task"] = None
            return _ack("stop")
        if kind == "mark_phase":
            if r is None:
                return _error("mark_phase", "no active session")
            name = cmd.get("phase")
            if not isinstance(name, str):
                return _error("mark_phase", "missing phase name")
            try:
                at = r.mark_phase(name)
            except UnknownPhase as e:
                return _error("mark_phase", str(e))
            except SessionEnded:
                return _error("mark_phase", "session already ended")
            return _ack("mark_phase", phase=name, applies_at_tick=at)
        if kind == "tlx_submit":
            scores = cmd.get("scores")
            participant = cmd.get("participant")
            if not isinstance(participant, str) or not participant:
                return _error("tlx_submit", "missing participant")
            if not isinstance(scores, dict):
                return _error("tlx_submit", "missing scores")
            missing = [s for s in TLX_SUBSCALES if s not in scores]
            if missing:
                return _error("tlx_submit", f"missing subscales: {missing}")
            vals = {}
            for key in TLX_SUBSCALES:
                v = scores[key]
                if not isinstance(v, (int, float)) or not 0 <= v <= 100:
                    return _error("tlx_submit", f"subscale {key} must be in [0, 100]")
                vals[key] = float(v)
            entry = {"participant": participant, "scores": vals,
                     "composite": tlx_composite(vals)}
            state["tlx"].append(entry)
            if tlx_path:
                with open(tlx_path, "a") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
            return _ack("tlx_submit", composite=entry["composite"],
                        n_recorded=len(state["tlx"]))
        return _error(kind, f"unknown command type {kind!r}")

    @app.get("/healthz")
    def healthz():
        r = runner()
        return {"ok": True, "started": r is not None,
                "ended": bool(r.ended) if r else False,
                "tick": r.tick if r else None}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        sub = hub.subscribe()

        async def sender():
            while True:
                msg = await hub.next_message(sub)
                await ws.send_text(json.dumps(msg))

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_text()
                await ws.send_text(json.dumps(handle_command(raw)))
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            hub.unsubscribe(sub)

    app.state.hub = hub
    app.state.session = state
    return app
