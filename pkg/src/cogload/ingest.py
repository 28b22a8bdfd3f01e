"""Framed binary stream parsing and the canonical per-tick CSV log format.

Wire format (ThinkGear-style): 0xAA 0xAA sync, one payload-length byte
(1..169), TLV payload, then a checksum byte equal to the bitwise NOT of the
payload byte sum mod 256.  TLV codes with known meaning carry fixed implicit
lengths; unknown codes carry an explicit length byte and are skipped.
"""

from __future__ import annotations

import csv
import dataclasses
import struct
from typing import Iterable, Iterator

from .labels import BAND_NAMES, Task

SYNC = 0xAA
MAX_PAYLOAD = 169

CODE_QUALITY = 0x02
CODE_RR = 0x80
CODE_BANDS = 0x83

RR_MIN_MS = 200.0
RR_MAX_MS = 3000.0

CSV_HEADER = ["participant", "round", "task", "tick", "quality",
              *BAND_NAMES, "rr_list"]


class ChecksumMismatch(Exception):
    pass


class MalformedTLV(Exception):
    pass


class SchemaMismatch(Exception):
    pass


class BadValue(Exception):
    def __init__(self, row: int, column: str, detail: str):
        super().__init__(f"row {row}, column {column!r}: {detail}")
        self.row = row
        self.column = column


@dataclasses.dataclass(frozen=True)
class RawFrame:
    payload: bytes

    @property
    def checksum(self) -> int:
        return ~sum(self.payload) & 0xFF

    def encode(self) -> bytes:
        if not 0 < len(self.payload) <= MAX_PAYLOAD:
            raise ValueError(f"payload length must be 1..{MAX_PAYLOAD}")
        return bytes([SYNC, SYNC, len(self.payload)]) + self.payload + bytes([self.checksum])


def encode_frame(payload: bytes) -> bytes:
    return RawFrame(bytes(payload)).encode()


@dataclasses.dataclass
class ParseResult:
    frame: RawFrame | None   # None: need more bytes (truncated input)
    consumed: int            # bytes the caller may discard
    checksum_errors: int     # corrupt frames skipped during the scan


def parse_frame(data: bytes) -> ParseResult:
    """Scan for the first complete checksum-valid frame.

    Resynchronizes past garbage byte by byte.  Never consumes past a possible
    frame start, so callers can buffer partial input and retry with more
    bytes; a returned frame always consumes through its checksum byte.
    """
    n = len(data)
    bad = 0
    i = 0
    while True:
        # find the next sync pair at or after i
        j = data.find(b"\xaa\xaa", i)
        if j < 0:
            # keep a trailing lone 0xAA: it may be the start of the next pair
            keep = 1 if n > 0 and data[n - 1] == SYNC else 0
            return ParseResult(None, n - keep, bad)
        if j + 3 > n:
            return ParseResult(None, j, bad)
        plen = data[j + 2]
        if not 0 < plen <= MAX_PAYLOAD:
            i = j + 1
            continue
        end = j + 3 + plen + 1
        if end > n:
            return ParseResult(None, j, bad)
        payload = data[j + 3:j + 3 + plen]
        if ~sum(payload) & 0xFF == data[end - 1]:
            return ParseResult(RawFrame(bytes(payload)), end, bad)
        bad += 1
        i = j + 1


class FrameParser:
    """Incremental single-consumer wrapper around parse_frame."""

    def __init__(self):
        self._buf = bytearray()
        self.checksum_errors = 0

    def feed(self, data: bytes) -> list[RawFrame]:
        self._buf.extend(data)
        frames = []
        while True:
            res = parse_frame(bytes(self._buf))
            self.checksum_errors += res.checksum_errors
            del self._buf[:res.consumed]
            if res.frame is None:
                return frames
            frames.append(res.frame)


@dataclasses.dataclass
class PayloadUpdate:
    quality: int | None = None
    rr_intervals: list[float] = dataclasses.field(default_factory=list)
    band_powers: list[float] | None = None


def decode_payload(payload: bytes | RawFrame) -> PayloadUpdate:
    """Decode a checksum-valid frame's TLV payload into field updates."""
    if isinstance(payload, RawFrame):
        payload = payload.payload
    upd = PayloadUpdate()
    i = 0
    n = len(payload)
    while i < n:
        code = payload[i]
        i += 1
        if code == CODE_QUALITY:
            if i + 1 > n:
                raise MalformedTLV("quality value overruns payload")
            upd.quality = payload[i]
            i += 1
        elif code == CODE_RR:
            if i + 2 > n:
                raise MalformedTLV("r-r value overruns payload")
            upd.rr_intervals.append(float((payload[i] << 8) | payload[i + 1]))
            i += 2
        elif code == CODE_BANDS:
            if i + 32 > n:
                raise MalformedTLV("band-power block overruns payload")
            upd.band_powers = [float(v) for v in struct.unpack_from(">8I", payload, i)]
            i += 32
        else:
            if i + 1 > n:
                raise MalformedTLV(f"unknown code 0x{code:02X} missing length byte")
            skip = payload[i]
            i += 1
            if i + skip > n:
                raise MalformedTLV(f"unknown code 0x{code:02X} length {skip} overruns payload")
            i += skip
    return upd


@dataclasses.dataclass
class SampleRecord:
    """One 1-second tick of device data plus provenance."""

    participant_id: str
    round: int
    task: Task
    tick: int
    quality: int
    band_power: list[float]
    rr_intervals: list[float]


class StreamAssembler:
    """Group decoded payload updates into 1 Hz SampleRecords.

    A band-power block closes the current tick (the device emits one per
    second); quality and R-R values seen since the previous block attach to
    it.  Physiologically impossible R-R values are dropped and counted.
    """

    def __init__(self, participant_id: str, round_no: int = 1,
                 task: Task = Task.UNLABELED):
        self.participant_id = participant_id
        self.round = round_no
        self.task = task
        self.dropped_rr = 0
        self._tick = 0
        self._quality = 0
        self._rr: list[float] = []

    def push(self, upd: PayloadUpdate) -> SampleRecord | None:
        if upd.quality is not None:
            self._quality = upd.quality
        for rr in upd.rr_intervals:
            if RR_MIN_MS < rr < RR_MAX_MS:
                self._rr.append(rr)
            else:
                self.dropped_rr += 1
        if upd.band_powers is None:
            return None
        rec = SampleRecord(self.participant_id, self.round, self.task,
                           self._tick, self._quality, list(upd.band_powers),
                           self._rr)
        self._tick += 1
        self._rr = []
        return rec


def _fmt(x: float) -> str:
    # repr round-trips float64 exactly; trim the trailing '.0' of whole values
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def write_csv(records: Iterable[SampleRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.participant_id, r.round, r.task.value, r.tick,
                        r.quality, *[_fmt(p) for p in r.band_power],
                        ";".join(_fmt(v) for v in r.rr_intervals)])


def read_csv(path: str) -> list[SampleRecord]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = next(rd)
        except StopIteration:
            raise SchemaMismatch("empty file, expected header row") from None
        if header != CSV_HEADER:
            raise SchemaMismatch(f"header {header!r} does not match canonical schema")
        return [_parse_row(row, irow) for irow, row in enumerate(rd, start=1)]


def _parse_row(row: list[str], irow: int) -> SampleRecord:
    if len(row) != len(CSV_HEADER):
        raise BadValue(irow, "<row>", f"expected {len(CSV_HEADER)} fields, got {len(row)}")

    def fail(col: str, detail: str):
        raise BadValue(irow, col, detail) from None

    try:
        round_no = int(row[1])
    except ValueError:
        fail("round", f"not an integer: {row[1]!r}")
    if round_no not in (1, 2):
        fail("round", f"must be 1 or 2, got {round_no}")
    try:
        task = Task(row[2])
    except ValueError:
        fail("task", f"unknown task {row[2]!r}")
    try:
        tick = int(row[3])
    except ValueError:
        fail("tick", f"not an integer: {row[3]!r}")
    try:
        quality = int(row[4])
    except ValueError:
        fail("quality", f"not an integer: {row[4]!r}")
    if not 0 <= quality <= 200:
        fail("quality", f"must be 0..200, got {quality}")
    powers = []
    for name, cell in zip(BAND_NAMES, row[5:13]):
        try:
            v = float(cell)
        except ValueError:
            fail(name, f"not a number: {cell!r}")
        if v < 0:
            fail(name, f"negative power {v}")
        powers.append(v)
    rr = []
    if row[13]:
        for part in row[13].split(";"):
            try:
                rr.append(float(part))
            except ValueError:
                fail("rr_list", f"not a number: {part!r}")
    return SampleRecord(row[0], round_no, task, tick, quality, powers, rr)


def iter_device_file(path: str, participant_id: str, round_no: int = 1,
                     task: Task = Task.UNLABELED) -> Iterator[SampleRecord]:
    """Parse a captured binary stream file into SampleRecords."""
    parser = FrameParser()
    asm = StreamAssembler(participant_id, round_no, task)
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(65536)
            if not chunk:
                break
            for frame in parser.feed(chunk):
                rec = asm.push(decode_payload(frame))
                if rec is not None:
                    yield rec
