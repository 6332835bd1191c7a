"""EVS1 codec and windowing behavior."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evtrack.errors import (
    BadMagic,
    BadPolarity,
    NonMonotonicTimestamp,
    OutOfBoundsEvent,
    TruncatedFile,
    UnsupportedVersion,
    ZeroWindow,
)
from evtrack.events import (
    Event,
    EventStream,
    PadBytesWarning,
    decode_event_file,
    encode_event_file,
    window_iter,
)

from conftest import random_stream


def header(width=1280, height=720, n=0, magic=b"EVS1", version=1):
    return struct.pack("<4sIHHQ", magic, version, width, height, n)


def record(t, x, y, p, pad=b"\x00\x00\x00"):
    return struct.pack("<QHHB", t, x, y, p) + pad


class TestDecode:
    def test_empty_file(self):
        stream = decode_event_file(header(width=1280, height=720, n=0))
        assert (stream.width, stream.height, len(stream)) == (1280, 720, 0)

    def test_single_event_bytes(self):
        # one record assembled field by field, little-endian
        data = header(n=1) + record(5, 1, 2, 1)
        stream = decode_event_file(data)
        assert list(stream.iter_events()) == [Event(5, 1, 2, 1)]
        assert encode_event_file(stream) == data

    def test_empty_encode_is_header_only(self):
        assert len(encode_event_file(EventStream(1280, 720))) == 20

    def test_equal_streams_encode_identically(self, rng):
        a = random_stream(rng, 500)
        b = EventStream(a.width, a.height, a.t.copy(), a.x.copy(), a.y.copy(), a.p.copy())
        assert encode_event_file(a) == encode_event_file(b)

    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            decode_event_file(header(magic=b"NOPE"))

    def test_unsupported_version(self):
        with pytest.raises(UnsupportedVersion):
            decode_event_file(header(version=9))

    def test_truncated_header(self):
        with pytest.raises(TruncatedFile):
            decode_event_file(b"EVS1\x01")

    def test_truncated_body(self):
        with pytest.raises(TruncatedFile):
            decode_event_file(header(n=2) + record(0, 0, 0, 1))

    def test_trailing_garbage_is_length_mismatch(self):
        with pytest.raises(TruncatedFile):
            decode_event_file(header(n=0) + b"\x00")

    def test_bad_polarity_names_record_index(self):
        data = header(n=2) + record(0, 0, 0, 1) + record(1, 0, 0, 2)
        with pytest.raises(BadPolarity, match="record 1"):
            decode_event_file(data)

    def test_out_of_bounds_x(self):
        data = header(width=10, height=10, n=1) + record(0, 10, 0, 1)
        with pytest.raises(OutOfBoundsEvent, match="record 0"):
            decode_event_file(data)

    def test_out_of_bounds_y(self):
        data = header(width=10, height=10, n=1) + record(0, 0, 99, 0)
        with pytest.raises(OutOfBoundsEvent):
            decode_event_file(data)

    def test_non_monotonic_rejected_at_first_offender(self):
        data = header(n=3) + record(5, 0, 0, 1) + record(4, 0, 0, 1) + record(6, 0, 0, 1)
        with pytest.raises(NonMonotonicTimestamp, match="record 1"):
            decode_event_file(data)

    def test_nonzero_pad_warns_but_decodes(self):
        data = header(n=1) + record(0, 1, 1, 0, pad=b"\x01\x00\x00")
        with pytest.warns(PadBytesWarning):
            stream = decode_event_file(data)
        assert len(stream) == 1


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_round_trip_property(data):
    width = data.draw(st.integers(1, 200))
    height = data.draw(st.integers(1, 200))
    n = data.draw(st.integers(0, 300))
    ts = sorted(data.draw(st.lists(st.integers(0, 2**40), min_size=n, max_size=n)))
    xs = data.draw(st.lists(st.integers(0, width - 1), min_size=n, max_size=n))
    ys = data.draw(st.lists(st.integers(0, height - 1), min_size=n, max_size=n))
    ps = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    stream = EventStream(
        width,
        height,
        np.array(ts, np.uint64),
        np.array(xs, np.uint16),
        np.array(ys, np.uint16),
        np.array(ps, np.uint8),
    )
    assert decode_event_file(encode_event_file(stream)) == stream


class TestWindows:
    def test_half_open_boundary(self):
        stream = EventStream.from_events(
            64, 64, [Event(0, 0, 0, 1), Event(49_999, 1, 1, 1), Event(50_000, 2, 2, 0)]
        )
        windows = list(window_iter(stream, 50_000))
        assert [w.index for w in windows] == [1, 2]
        assert list(windows[0].t) == [0, 49_999]
        assert list(windows[1].t) == [50_000]

    def test_empty_stream_has_no_windows(self):
        assert list(window_iter(EventStream(8, 8), 50_000)) == []

    def test_gap_emits_empty_window(self):
        # floor(10 / 50000) + 1 = 1 and floor(120010 / 50000) + 1 = 3
        stream = EventStream.from_events(64, 64, [Event(10, 0, 0, 1), Event(120_010, 1, 1, 1)])
        windows = list(window_iter(stream, 50_000))
        assert [len(w) for w in windows] == [1, 0, 1]
        assert [(w.t_start, w.t_end) for w in windows] == [
            (0, 50_000),
            (50_000, 100_000),
            (100_000, 150_000),
        ]

    def test_zero_window_rejected(self):
        with pytest.raises(ZeroWindow):
            list(window_iter(EventStream(8, 8), 0))

    def test_min_frames_extends_coverage(self):
        stream = EventStream.from_events(64, 64, [Event(10, 0, 0, 1)])
        assert len(list(window_iter(stream, 50_000, min_frames=7))) == 7

    def test_partition_property(self, rng):
        stream = random_stream(rng, 2_000, t_max=500_000)
        dt = 37_000
        seen = 0
        for w in window_iter(stream, dt):
            assert ((w.t >= w.t_start) & (w.t < w.t_end)).all()
            expected_index = w.index
            assert all(int(t) // dt + 1 == expected_index for t in w.t)
            seen += len(w)
        assert seen == len(stream)
