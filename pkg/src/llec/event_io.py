"""EVT2 binary and CSV event stream I/O, plus basic stream statistics.

EVT2 word layout (32-bit little-endian words):
  bits [31:28]  word type: 0x0 = CD event, negative polarity
                           0x1 = CD event, positive polarity
                           0x8 = EVT_TIME_HIGH
                           anything else is skipped
  CD words:        [27:22] = 6-bit timestamp LSBs, [21:11] = x, [10:0] = y
  TIME_HIGH words: [27:0]  = timestamp bits [33:6]

ASCII header lines starting with '%' may precede the binary payload and are
skipped.  The time base before the first TIME_HIGH word is 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

EVT2_CD_OFF = 0x0
EVT2_CD_ON = 0x1
EVT2_TIME_HIGH = 0x8

MAX_COORD = 1 << 11   # x, y must fit 11 bits
MAX_TIMESTAMP = 1 << 34  # 6 LSBs + 28 TIME_HIGH bits


class FormatError(ValueError):
    """Malformed EVT2/CSV input."""


class RangeError(ValueError):
    """A field does not fit the serialized representation."""


@dataclass
class EventStream:
    """An ordered (chronological) stream of (x, y, t, p) events."""

    sensor_width: int
    sensor_height: int
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int64)
        n = len(self.x)
        if not (len(self.y) == len(self.t) == len(self.p) == n):
            raise ValueError("event component arrays differ in length")

    @classmethod
    def empty(cls, width: int, height: int) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls(width, height, z, z.copy(), z.copy(), z.copy())

    @classmethod
    def from_tuples(cls, width: int, height: int, events) -> "EventStream":
        arr = np.asarray(list(events), dtype=np.int64).reshape(-1, 4)
        return cls(width, height, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    def to_tuples(self) -> list[tuple[int, int, int, int]]:
        return [tuple(int(v) for v in row)
                for row in np.stack([self.x, self.y, self.t, self.p], axis=1)]

    def __len__(self) -> int:
        return len(self.x)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.sensor_width == other.sensor_width
                and self.sensor_height == other.sensor_height
                and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y)
                and np.array_equal(self.t, other.t)
                and np.array_equal(self.p, other.p))


@dataclass
class StreamStats:
    duration: float            # seconds
    event_count: int
    event_rate: float          # mega-events per second
    positive_fraction: float


def _strip_ascii_header(data: bytes) -> bytes:
    pos = 0
    while pos < len(data) and data[pos:pos + 1] == b"%":
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise FormatError("unterminated '%' header line")
        pos = nl + 1
    return data[pos:]


def parse_evt2(data: bytes, width: int, height: int, strict: bool = True) -> EventStream:
    """Decode EVT2 words into an event stream.

    Unknown word types are skipped.  Under ``strict`` (default) an event with
    out-of-range coordinates raises :class:`FormatError`; otherwise it is
    dropped with a logged diagnostic.
    """
    payload = _strip_ascii_header(bytes(data))
    if len(payload) % 4 != 0:
        raise FormatError(f"EVT2 payload length {len(payload)} is not a multiple of 4")
    words = np.frombuffer(payload, dtype="<u4")
    if words.size == 0:
        return EventStream.empty(width, height)

    wtype = (words >> 28).astype(np.int64)
    is_th = wtype == EVT2_TIME_HIGH
    th_value = (words & 0x0FFFFFFF).astype(np.int64)
    # forward-fill the most recent TIME_HIGH value; base is 0 before the first
    mark = np.where(is_th, np.arange(words.size), -1)
    last_th = np.maximum.accumulate(mark)
    base = np.where(last_th >= 0, th_value[np.maximum(last_th, 0)], 0)

    is_cd = wtype <= EVT2_CD_ON
    cd = words[is_cd].astype(np.int64)
    t = (base[is_cd] << 6) + ((cd >> 22) & 0x3F)
    x = (cd >> 11) & 0x7FF
    y = cd & 0x7FF
    p = wtype[is_cd]

    oob = (x >= width) | (y >= height)
    if oob.any():
        bad = int(np.flatnonzero(oob)[0])
        if strict:
            raise FormatError(
                f"event {bad} at ({x[bad]},{y[bad]}) outside {width}x{height} sensor")
        log.warning("dropped %d events with out-of-range coordinates", int(oob.sum()))
        keep = ~oob
        x, y, t, p = x[keep], y[keep], t[keep], p[keep]
    return EventStream(width, height, x, y, t, p)


def serialize_evt2(stream: EventStream) -> bytes:
    """Encode a chronological stream as EVT2 words.

    A TIME_HIGH word is emitted before the first CD event and whenever the
    timestamp's upper 28 bits advance.  The empty stream serializes to zero
    bytes.
    """
    n = len(stream)
    if n == 0:
        return b""
    x, y, t, p = stream.x, stream.y, stream.t, stream.p
    if (x < 0).any() or (x >= MAX_COORD).any() or (y < 0).any() or (y >= MAX_COORD).any():
        raise RangeError("coordinate does not fit 11 bits")
    if (t < 0).any() or (t >= MAX_TIMESTAMP).any():
        raise RangeError("timestamp does not fit 34 bits")
    if not np.isin(p, (0, 1)).all():
        raise RangeError("polarity must be 0 or 1")

    high = t >> 6
    change = np.empty(n, dtype=bool)
    change[0] = True
    change[1:] = high[1:] != high[:-1]

    cd_words = (p << 28) | ((t & 0x3F) << 22) | (x << 11) | y
    th_words = (EVT2_TIME_HIGH << 28) | high[change]

    idx = np.arange(n) + np.cumsum(change)
    out = np.zeros(n + int(change.sum()), dtype=np.int64)
    out[idx] = cd_words
    out[idx[change] - 1] = th_words
    return out.astype("<u4").tobytes()


def parse_csv(text: str, width: int | None = None, height: int | None = None) -> EventStream:
    """Parse "x,y,t,p" lines; one optional header line is allowed."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            vals = tuple(int(v) for v in parts)
        except ValueError:
            if lineno == 1:
                continue  # header line
            raise FormatError(f"line {lineno}: non-integer field") from None
        if vals[3] not in (0, 1):
            raise FormatError(f"line {lineno}: polarity {vals[3]} not in {{0, 1}}")
        if vals[0] < 0 or vals[1] < 0 or vals[2] < 0:
            raise FormatError(f"line {lineno}: negative field")
        rows.append(vals)
    arr = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
    if width is None:
        width = int(arr[:, 0].max()) + 1 if len(arr) else 1
    if height is None:
        height = int(arr[:, 1].max()) + 1 if len(arr) else 1
    if len(arr) and (int(arr[:, 0].max()) >= width or int(arr[:, 1].max()) >= height):
        raise FormatError("coordinates outside the stated sensor geometry")
    return EventStream(width, height, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def serialize_csv(stream: EventStream) -> str:
    lines = ["x,y,t,p"]
    lines.extend(f"{x},{y},{t},{p}"
                 for x, y, t, p in zip(stream.x, stream.y, stream.t, stream.p))
    return "\n".join(lines) + "\n"


def compute_stats(stream: EventStream) -> StreamStats:
    n = len(stream)
    if n == 0:
        return StreamStats(0.0, 0, 0.0, 0.0)
    duration = float(stream.t[-1] - stream.t[0]) / 1e6
    rate = n / duration / 1e6 if duration > 0 else 0.0
    return StreamStats(duration, n, rate, float(stream.p.mean()))
