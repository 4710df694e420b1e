import numpy as np
import pytest
from hypothesis import given

from conftest import streams
from evlink.events import EventStream, SensorGeometry, rebase
from evlink.evt import EventFileError, parse_event_file, write_event_file


def test_single_record():
    s = parse_event_file(b"EVT1 32 32\n0 3 4 1\n")
    assert len(s) == 1
    ev = s[0]
    assert (ev.x, ev.y, ev.t, ev.p) == (3, 4, 0, 1)


def test_rebases_to_zero():
    s = parse_event_file(b"EVT1 8 8\n100 1 1 1\n150 2 2 -1\n")
    assert list(s.t) == [0, 50]


@pytest.mark.parametrize(
    "data, kind",
    [
        (b"EVT1 32 32\n10 40 4 1\n", "out-of-bounds-event"),
        (b"EVT2 32 32\n", "malformed-header"),
        (b"EVT1 32\n", "malformed-header"),
        (b"EVT1 0 32\n", "malformed-header"),
        (b"EVT1 32 32\n0 1 1\n", "malformed-record"),
        (b"EVT1 32 32\n0 1 1 0\n", "malformed-record"),
        (b"EVT1 32 32\n0 a 1 1\n", "malformed-record"),
        (b"EVT1 32 32\n5 1 1 1\n3 1 1 1\n", "non-monotonic-timestamp"),
    ],
)
def test_errors(data, kind):
    with pytest.raises(EventFileError) as exc:
        parse_event_file(data)
    assert exc.value.kind == kind


def test_error_reports_line():
    with pytest.raises(EventFileError) as exc:
        parse_event_file(b"EVT1 4 4\n0 1 1 1\n1 9 1 1\n")
    assert exc.value.line == 3


def test_write_empty_and_two():
    g = SensorGeometry(32, 32)
    assert write_event_file(EventStream(g)) == b"EVT1 32 32\n"
    s = EventStream(g, [0, 7], [1, 2], [3, 4], [1, -1])
    assert write_event_file(s) == b"EVT1 32 32\n0 1 3 1\n7 2 4 -1\n"


@given(streams(max_events=300))
def test_round_trip(s):
    s = rebase(s)
    data = write_event_file(s)
    back = parse_event_file(data)
    assert back == s
    assert write_event_file(back) == data


def test_round_trip_1000_events():
    rng = np.random.default_rng(3)
    g = SensorGeometry(64, 48)
    t = np.sort(rng.integers(0, 10**6, 1000))
    t -= t[0]
    s = EventStream(g, t, rng.integers(0, 64, 1000), rng.integers(0, 48, 1000), rng.choice([-1, 1], 1000))
    assert parse_event_file(write_event_file(s)) == s
