"""Polarity split, fixed-window time segmentation and timestamp normalization.

Each event lands in the segment keyed by (floor(t / ts), p).  Within a
segment, timestamps are normalized by subtracting the segment's minimum
timestamp, so every normalized timestamp lies in [0, ts).  Duplicate
(x, y, t_norm) triples within one polarity segment are collapsed: the octree
downstream represents a set of occupied voxels, not multiplicities.

The inverse emits events in the canonical (t, p, y, x) order, since the
octree does not preserve arrival order among simultaneous events.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .event_io import EventStream

log = logging.getLogger(__name__)


class ConsistencyError(ValueError):
    """A decoded segment contradicts its own window metadata."""


@dataclass(frozen=True)
class SegmentKey:
    segment_index: int
    polarity: int


@dataclass
class PreprocessConfig:
    """Segment length ``ts`` in microseconds; must be a power of two so the
    octree cube side is exact."""

    ts: int

    def __post_init__(self):
        if self.ts < 1 or self.ts & (self.ts - 1):
            raise ValueError(f"ts={self.ts} is not a power of two")


@dataclass
class Segment:
    key: SegmentKey
    min_timestamp: int
    points: np.ndarray  # (n, 3) int64 rows (x, y, t_norm), unique

    def __len__(self) -> int:
        return len(self.points)


def default_ts(width: int, height: int) -> int:
    """Resolution-keyed default segment length (overridable by flag)."""
    if (width, height) == (1280, 720):
        return 2048
    if (width, height) == (640, 480):
        return 1024
    return 2048 if width > 640 else 1024


def segment_stream(stream: EventStream, cfg: PreprocessConfig) -> list[Segment]:
    """Split by polarity and ts-length windows; empty segments are omitted.

    Returned segments are ordered by (segment_index, polarity).
    """
    n = len(stream)
    if n == 0:
        return []
    seg_idx = stream.t // cfg.ts
    order = np.lexsort((stream.t, stream.p, seg_idx))
    x, y, t, p = (a[order] for a in (stream.x, stream.y, stream.t, stream.p))
    si = seg_idx[order]

    starts = np.flatnonzero(np.r_[True, (si[1:] != si[:-1]) | (p[1:] != p[:-1])])
    bounds = np.r_[starts, n]
    segments = []
    dup_total = 0
    for a, b in zip(bounds[:-1], bounds[1:]):
        min_t = int(t[a])  # sorted by t within the group
        pts = np.stack([x[a:b], y[a:b], t[a:b] - min_t], axis=1)
        pts = np.unique(pts, axis=0)
        dup_total += (b - a) - len(pts)
        segments.append(Segment(SegmentKey(int(si[a]), int(p[a])), min_t, pts))
    if dup_total:
        log.debug("collapsed %d duplicate (x, y, t) triples", dup_total)
    return segments


def reassemble_stream(segments: list[Segment], cfg: PreprocessConfig,
                      width: int, height: int) -> EventStream:
    """Exact inverse of :func:`segment_stream` up to canonical ordering."""
    if not segments:
        return EventStream.empty(width, height)
    xs, ys, ts, ps = [], [], [], []
    for seg in segments:
        lo = seg.key.segment_index * cfg.ts
        hi = lo + cfg.ts
        t_abs = seg.points[:, 2] + seg.min_timestamp
        if len(t_abs) and (int(t_abs.min()) < lo or int(t_abs.max()) >= hi):
            raise ConsistencyError(
                f"segment {seg.key}: timestamps escape window [{lo}, {hi})")
        xs.append(seg.points[:, 0])
        ys.append(seg.points[:, 1])
        ts.append(t_abs)
        ps.append(np.full(len(seg.points), seg.key.polarity, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    t = np.concatenate(ts)
    p = np.concatenate(ps)
    order = np.lexsort((x, y, p, t))
    return EventStream(width, height, x[order], y[order], t[order], p[order])


def canonicalize(stream: EventStream) -> EventStream:
    """Sort by (t, p, y, x) and collapse exact duplicate events."""
    if len(stream) == 0:
        return stream
    rows = np.stack([stream.t, stream.p, stream.y, stream.x], axis=1)
    rows = np.unique(rows, axis=0)  # lexicographic sort == canonical order
    return EventStream(stream.sensor_width, stream.sensor_height,
                       rows[:, 3], rows[:, 2], rows[:, 0], rows[:, 1])
