"""Event data model, validation, time windows and bin partitioning.

Streams are stored column-wise (one numpy array per field) so that
encoders and the simulator can work vectorised; ``Event`` is the scalar
view used when iterating.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


class InvalidRange(ValueError):
    pass


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"geometry must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class BinSpec:
    bin_duration: int = 90_000
    sub_bins: int = 3

    def __post_init__(self):
        if self.bin_duration <= 0:
            raise ValueError("bin_duration must be > 0")
        if self.sub_bins < 1:
            raise ValueError("sub_bins must be >= 1")
        if self.bin_duration % self.sub_bins:
            raise ValueError("bin_duration must be divisible by sub_bins")

    @property
    def sub_duration(self) -> int:
        return self.bin_duration // self.sub_bins


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype).reshape(-1)
    a.setflags(write=False)
    return a


class EventStream:
    """Time-ordered events on a sensor grid.

    ``span`` is the optional half-open interval ``[start, end)`` the stream
    is known to cover. Windows and simulator outputs carry it; streams
    parsed from files do not, and their coverage ends after the last event.
    Construction does not validate; use :func:`validate_stream`.
    """

    __slots__ = ("geometry", "t", "x", "y", "p", "span")

    def __init__(self, geometry: SensorGeometry, t=(), x=(), y=(), p=(), span=None):
        self.geometry = geometry
        self.t = _frozen(t, np.int64)
        self.x = _frozen(x, np.int64)
        self.y = _frozen(y, np.int64)
        self.p = _frozen(p, np.int8)
        if not (len(self.t) == len(self.x) == len(self.y) == len(self.p)):
            raise ValueError("event columns differ in length")
        if span is not None:
            span = (int(span[0]), int(span[1]))
        self.span = span

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events: Sequence[Event], span=None) -> "EventStream":
        return cls(
            geometry,
            [e.t for e in events],
            [e.x for e in events],
            [e.y for e in events],
            [e.p for e in events],
            span=span,
        )

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None

    def __repr__(self) -> str:
        g = self.geometry
        return f"EventStream({g.width}x{g.height}, n={len(self)}, span={self.span})"

    @property
    def end_time(self) -> int:
        """Exclusive end of the covered time range."""
        if self.span is not None:
            return self.span[1]
        return int(self.t[-1]) + 1 if len(self) else 0

    def take(self, mask_or_index, span=None) -> "EventStream":
        return EventStream(
            self.geometry,
            self.t[mask_or_index],
            self.x[mask_or_index],
            self.y[mask_or_index],
            self.p[mask_or_index],
            span=span,
        )

    def with_polarity(self, p) -> "EventStream":
        return EventStream(self.geometry, self.t, self.x, self.y, p, span=self.span)


@dataclass(frozen=True)
class Violation:
    index: int
    rule: str


def validate_stream(stream: EventStream) -> list[Violation]:
    """Return every invariant violation; an empty list means the stream is valid."""
    g = stream.geometry
    out = []
    bad_p = ~np.isin(stream.p, (1, -1))
    bad_xy = (stream.x < 0) | (stream.y < 0) | (stream.x >= g.width) | (stream.y >= g.height)
    bad_t = stream.t < 0
    non_mono = np.zeros(len(stream), dtype=bool)
    non_mono[1:] = np.diff(stream.t) < 0
    for rule, mask in (
        ("polarity", bad_p),
        ("out-of-bounds", bad_xy),
        ("negative-timestamp", bad_t),
        ("non-monotonic", non_mono),
    ):
        out.extend(Violation(int(i), rule) for i in np.flatnonzero(mask))
    out.sort(key=lambda v: v.index)
    return out


def window(stream: EventStream, t_start: int, t_end: int) -> EventStream:
    """Events with ``t_start <= t < t_end``, in original order."""
    if t_start > t_end:
        raise InvalidRange(f"t_start {t_start} > t_end {t_end}")
    mask = (stream.t >= t_start) & (stream.t < t_end)
    return stream.take(mask, span=(t_start, t_end))


def num_full_bins(stream: EventStream, spec: BinSpec) -> int:
    if len(stream) == 0 and stream.span is None:
        return 0
    return stream.end_time // spec.bin_duration


def partition_bins(stream: EventStream, spec: BinSpec = BinSpec()) -> list[list[EventStream]]:
    """Split a stream into full bins of ``spec.sub_bins`` consecutive sub-windows.

    Bins are aligned to t=0 of the stream clock; a trailing partial bin is dropped.
    """
    bins = []
    sub = spec.sub_duration
    for k in range(num_full_bins(stream, spec)):
        t0 = k * spec.bin_duration
        bins.append([window(stream, t0 + j * sub, t0 + (j + 1) * sub) for j in range(spec.sub_bins)])
    return bins


def rebase(stream: EventStream) -> EventStream:
    """Shift timestamps so the first event is at t=0."""
    if len(stream) == 0:
        return stream
    t0 = stream.t[0]
    return EventStream(stream.geometry, stream.t - t0, stream.x, stream.y, stream.p)
