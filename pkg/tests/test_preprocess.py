import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_stream
from llec.event_io import EventStream
from llec.preprocess import (ConsistencyError, PreprocessConfig, Segment,
                             SegmentKey, canonicalize, default_ts,
                             reassemble_stream, segment_stream)


def test_ts_must_be_power_of_two():
    for bad in (0, -8, 3, 1000, 1025):
        with pytest.raises(ValueError):
            PreprocessConfig(bad)
    PreprocessConfig(1)
    PreprocessConfig(2048)


def test_default_ts_by_resolution():
    assert default_ts(1280, 720) == 2048
    assert default_ts(640, 480) == 1024
    assert default_ts(320, 240) == 1024
    assert default_ts(2048, 1080) == 2048


def test_segmentation_hand_trace():
    s = EventStream.from_tuples(640, 480, [
        (1, 2, 100, 0),
        (1, 2, 100, 0),   # exact duplicate, collapses
        (3, 4, 50, 1),
        (5, 6, 1500, 0),
    ])
    segs = segment_stream(s, PreprocessConfig(1024))
    keys = [(g.key.segment_index, g.key.polarity) for g in segs]
    assert keys == [(0, 0), (0, 1), (1, 0)]
    assert segs[0].min_timestamp == 100
    assert segs[0].points.tolist() == [[1, 2, 0]]
    assert segs[1].min_timestamp == 50
    assert segs[2].points.tolist() == [[5, 6, 0]]


def test_normalized_timestamps_fit_window():
    s = random_stream(7, 5000)
    for seg in segment_stream(s, PreprocessConfig(1024)):
        assert seg.points[:, 2].min() == 0
        assert seg.points[:, 2].max() < 1024


def test_empty_stream_yields_no_segments():
    assert segment_stream(EventStream.empty(640, 480), PreprocessConfig(1024)) == []
    assert reassemble_stream([], PreprocessConfig(1024), 640, 480) == \
        EventStream.empty(640, 480)


def test_segment_points_unique():
    rng = np.random.default_rng(0)
    n = 4000
    s = EventStream(64, 64, rng.integers(0, 8, n), rng.integers(0, 8, n),
                    np.sort(rng.integers(0, 64, n)), rng.integers(0, 2, n))
    for seg in segment_stream(s, PreprocessConfig(64)):
        assert len(np.unique(seg.points, axis=0)) == len(seg.points)


def test_reassemble_inverts_segmentation():
    for seed in range(5):
        s = random_stream(seed, 3000)
        cfg = PreprocessConfig(1024)
        assert reassemble_stream(segment_stream(s, cfg), cfg, 640, 480) == \
            canonicalize(s)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 31), st.integers(0, 31),
                          st.integers(0, 4095), st.integers(0, 1)),
                min_size=1, max_size=50),
       st.sampled_from([64, 256, 1024]))
def test_reassemble_property(events, ts):
    s = EventStream.from_tuples(32, 32, events)
    cfg = PreprocessConfig(ts)
    assert reassemble_stream(segment_stream(s, cfg), cfg, 32, 32) == canonicalize(s)


def test_reassemble_rejects_escaped_timestamps():
    seg = Segment(SegmentKey(0, 1), 1000, np.array([[0, 0, 100]]))
    with pytest.raises(ConsistencyError):
        reassemble_stream([seg], PreprocessConfig(1024), 640, 480)


def test_canonical_order_and_dedup():
    s = EventStream.from_tuples(640, 480, [
        (9, 9, 5, 1), (1, 1, 5, 0), (2, 0, 5, 0), (0, 2, 5, 0),
        (1, 1, 5, 0), (0, 0, 1, 1),
    ])
    c = canonicalize(s)
    assert c.to_tuples() == [(0, 0, 1, 1), (2, 0, 5, 0), (1, 1, 5, 0),
                             (0, 2, 5, 0), (9, 9, 5, 1)]
    assert canonicalize(c) == c
