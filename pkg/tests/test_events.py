from collections import Counter

import pytest
from hypothesis import given, strategies as st

from conftest import streams
from evlink.events import (
    BinSpec,
    Event,
    EventStream,
    InvalidRange,
    SensorGeometry,
    partition_bins,
    validate_stream,
    window,
)

G32 = SensorGeometry(32, 32)


def test_empty_stream_is_valid():
    assert validate_stream(EventStream(G32)) == []


def test_non_monotonic_flagged_at_second_event():
    s = EventStream.from_events(G32, [Event(0, 0, 5, 1), Event(1, 1, 3, -1)])
    v = validate_stream(s)
    assert [(x.index, x.rule) for x in v] == [(1, "non-monotonic")]


def test_out_of_bounds_flagged():
    s = EventStream.from_events(G32, [Event(32, 0, 0, 1)])
    assert [(x.index, x.rule) for x in validate_stream(s)] == [(0, "out-of-bounds")]


def test_bad_polarity_flagged():
    s = EventStream(G32, [0], [0], [0], [0])
    assert validate_stream(s)[0].rule == "polarity"


def test_binspec_rejects_indivisible():
    with pytest.raises(ValueError):
        BinSpec(100, 3)
    assert BinSpec().sub_duration == 30_000


def test_window_boundaries():
    s = EventStream(G32, [10, 20, 30], [1, 2, 3], [0, 0, 0], [1, 1, 1])
    assert len(window(s, 0, 0)) == 0
    assert list(window(s, 10, 30).t) == [10, 20]
    assert window(s, 0, 31) == s
    with pytest.raises(InvalidRange):
        window(s, 5, 4)


def test_partition_90ms_default():
    s = EventStream(G32, [0, 29_999, 30_000, 60_000, 89_999], [0] * 5, [0] * 5, [1] * 5)
    bins = partition_bins(s, BinSpec())
    assert len(bins) == 1
    assert [len(sub) for sub in bins[0]] == [2, 1, 2]
    assert [sub.span for sub in bins[0]] == [(0, 30_000), (30_000, 60_000), (60_000, 90_000)]


def test_partition_empty_and_trailing():
    assert partition_bins(EventStream(G32), BinSpec()) == []
    s = EventStream(G32, [0, 100_000, 199_999], [0] * 3, [0] * 3, [1] * 3)
    # 200 ms -> 200 // 90 = 2 full bins, the trailing 20 ms is dropped
    bins = partition_bins(s, BinSpec())
    assert len(bins) == 2
    assert sum(len(sub) for b in bins for sub in b) == 2


@given(streams(), st.integers(0, 200_000), st.integers(0, 200_000))
def test_window_idempotent_and_ordered(s, a, b):
    a, b = min(a, b), max(a, b)
    w = window(s, a, b)
    assert window(w, a, b) == w
    assert validate_stream(w) == []
    assert all(a <= t < b for t in w.t)


@given(streams(), st.sampled_from([(90_000, 3), (60_000, 2), (50_000, 5), (30_000, 1)]))
def test_partition_complete(s, spec_args):
    spec = BinSpec(*spec_args)
    bins = partition_bins(s, spec)
    covered = len(bins) * spec.bin_duration
    expected = Counter(ev for ev in s if ev.t < covered)
    got = Counter(ev for b in bins for sub in b for ev in sub)
    assert got == expected
    flat = [ev.t for b in bins for sub in b for ev in sub]
    assert flat == sorted(flat)
    assert all(len(b) == spec.sub_bins for b in bins)
