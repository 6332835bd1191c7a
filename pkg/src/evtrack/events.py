"""Event stream model, EVS1 codec, and constant-time-window slicing.

EVS1 container layout (all integers little-endian):

    bytes 0-3    ASCII magic "EVS1"
    bytes 4-7    u32 version, currently 1
    bytes 8-9    u16 sensor width in pixels
    bytes 10-11  u16 sensor height in pixels
    bytes 12-19  u64 event count N
    N records of 16 bytes each:
        u64 timestamp in microseconds since recording start
        u16 x, u16 y
        u8 polarity (0 or 1)
        3 pad bytes, written as zero

Timestamps must be non-decreasing. Nonzero pad bytes decode with a
warning, not an error. Timestamps are recording-relative.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    BadMagic,
    BadPolarity,
    NonMonotonicTimestamp,
    OutOfBoundsEvent,
    TruncatedFile,
    UnsupportedVersion,
    ZeroWindow,
)
from .fileio import atomic_write_bytes

MAGIC = b"EVS1"
VERSION = 1
HEADER = struct.Struct("<4sIHHQ")
HEADER_SIZE = HEADER.size  # 20 bytes
RECORD_SIZE = 16
RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "u1", (3,))]
)

DEFAULT_DT_US = 50_000


class PadBytesWarning(UserWarning):
    """Record pad bytes were not zero; values decoded anyway."""


@dataclass(frozen=True)
class Event:
    """One polarity change: timestamp (us), pixel column, pixel row, polarity."""

    t: int
    x: int
    y: int
    p: int


@dataclass(eq=False)
class EventStream:
    """Time-ordered events over a fixed sensor geometry.

    Columns are stored as numpy arrays (t: uint64, x/y: uint16, p: uint8)
    so codecs and converters stay vectorized.
    """

    width: int
    height: int
    t: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint64))
    x: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint16))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint16))
    p: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))

    def __post_init__(self) -> None:
        self.t = np.ascontiguousarray(self.t, dtype=np.uint64)
        self.x = np.ascontiguousarray(self.x, dtype=np.uint16)
        self.y = np.ascontiguousarray(self.y, dtype=np.uint16)
        self.p = np.ascontiguousarray(self.p, dtype=np.uint8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event columns must have equal length")

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    @classmethod
    def from_events(cls, width: int, height: int, events: Iterable[Event]) -> "EventStream":
        rows = list(events)
        stream = cls(
            width,
            height,
            np.array([e.t for e in rows], np.uint64),
            np.array([e.x for e in rows], np.uint16),
            np.array([e.y for e in rows], np.uint16),
            np.array([e.p for e in rows], np.uint8),
        )
        stream.validate()
        return stream

    def iter_events(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def validate(self) -> "EventStream":
        """Check polarity, bounds, and timestamp order; report the first offender."""
        bad = np.flatnonzero(self.p > 1)
        if bad.size:
            raise BadPolarity(f"record {bad[0]}: polarity {self.p[bad[0]]} not in {{0, 1}}")
        bad = np.flatnonzero(self.x >= self.width)
        if bad.size:
            raise OutOfBoundsEvent(
                f"record {bad[0]}: x={self.x[bad[0]]} outside width {self.width}"
            )
        bad = np.flatnonzero(self.y >= self.height)
        if bad.size:
            raise OutOfBoundsEvent(
                f"record {bad[0]}: y={self.y[bad[0]]} outside height {self.height}"
            )
        if len(self) > 1:
            bad = np.flatnonzero(self.t[1:] < self.t[:-1])
            if bad.size:
                i = int(bad[0]) + 1
                raise NonMonotonicTimestamp(
                    f"record {i}: timestamp {self.t[i]} < previous {self.t[i - 1]}"
                )
        return self


@dataclass
class EventWindow:
    """Events of one half-open time slice [t_start, t_end), 1-based index."""

    index: int
    t_start: int
    t_end: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.t)


def encode_event_file(stream: EventStream) -> bytes:
    """Serialize a validated stream to EVS1 bytes. Deterministic."""
    n = len(stream)
    header = HEADER.pack(MAGIC, VERSION, stream.width, stream.height, n)
    if n == 0:
        return header
    rec = np.zeros(n, dtype=RECORD_DTYPE)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p
    return header + rec.tobytes()


def decode_event_file(data: bytes) -> EventStream:
    """Parse and validate EVS1 bytes; round-trips encode_event_file exactly."""
    if len(data) < HEADER_SIZE:
        raise TruncatedFile(f"file is {len(data)} bytes, header needs {HEADER_SIZE}")
    magic, version, width, height, n = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} not supported (expected {VERSION})")
    body = len(data) - HEADER_SIZE
    if body != n * RECORD_SIZE:
        raise TruncatedFile(
            f"declared {n} events ({n * RECORD_SIZE} bytes) but body has {body} bytes"
        )
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=n, offset=HEADER_SIZE)
    if n and rec["pad"].any():
        warnings.warn("nonzero pad bytes in event records", PadBytesWarning, stacklevel=2)
    stream = EventStream(
        width,
        height,
        rec["t"].copy(),
        rec["x"].copy(),
        rec["y"].copy(),
        rec["p"].copy(),
    )
    return stream.validate()


def read_event_file(path) -> EventStream:
    with open(path, "rb") as fh:
        return decode_event_file(fh.read())


def write_event_file(path, stream: EventStream) -> None:
    atomic_write_bytes(path, encode_event_file(stream))


def frame_count(stream: EventStream, dt_us: int) -> int:
    """Number of windows needed to cover every event: ceil((t_max + 1) / dt)."""
    if dt_us <= 0:
        raise ZeroWindow(f"window length must be positive, got {dt_us}")
    if len(stream) == 0:
        return 0
    return int(stream.t[-1]) // dt_us + 1


def window_iter(
    stream: EventStream, dt_us: int = DEFAULT_DT_US, min_frames: int = 0
) -> Iterator[EventWindow]:
    """Slice a stream into contiguous half-open windows, indexed from 1.

    Windows with no events are still emitted; a still scene has frames even
    when the sensor is silent. min_frames extends coverage past the last
    event so label files longer than the event stream stay aligned.
    """
    total = max(frame_count(stream, dt_us), min_frames)
    lo = 0
    for i in range(1, total + 1):
        hi = int(np.searchsorted(stream.t, i * dt_us, side="left"))
        yield EventWindow(
            index=i,
            t_start=(i - 1) * dt_us,
            t_end=i * dt_us,
            t=stream.t[lo:hi],
            x=stream.x[lo:hi],
            y=stream.y[lo:hi],
            p=stream.p[lo:hi],
            width=stream.width,
            height=stream.height,
        )
        lo = hi
