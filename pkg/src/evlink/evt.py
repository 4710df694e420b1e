"""Plain-text EVT event files.

Format::

    EVT1 <width> <height>
    <t_us> <x> <y> <p>
    ...

with ``p`` in {1, -1} and ``\\n`` line endings. Timestamps are re-based on
parse so that the first event sits at t=0.
"""
from __future__ import annotations

import os

import numpy as np

from .events import EventStream, SensorGeometry, rebase

MAGIC = "EVT1"


class EventFileError(ValueError):
    """Raised for any malformed EVT input. ``kind`` names the failure."""

    def __init__(self, kind: str, message: str, line: int | None = None):
        self.kind = kind
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{kind}{where}: {message}")


def parse_event_file(data: bytes | str) -> EventStream:
    if isinstance(data, bytes):
        try:
            data = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise EventFileError("malformed-header", "input is not ASCII") from exc
    lines = data.split("\n")
    head = lines[0].split(" ")
    if len(head) != 3 or head[0] != MAGIC:
        raise EventFileError("malformed-header", f"expected '{MAGIC} <width> <height>', got {lines[0]!r}", 1)
    try:
        geometry = SensorGeometry(int(head[1]), int(head[2]))
    except ValueError as exc:
        raise EventFileError("malformed-header", str(exc), 1) from exc

    body = lines[1:]
    if body and body[-1] == "":
        body = body[:-1]
    rows = np.empty((len(body), 4), dtype=np.int64)
    for i, line in enumerate(body):
        parts = line.split(" ")
        try:
            if len(parts) != 4:
                raise ValueError(f"expected 4 fields, got {len(parts)}")
            rows[i] = [int(v) for v in parts]
        except ValueError as exc:
            raise EventFileError("malformed-record", f"{line!r}: {exc}", i + 2) from exc
        t, x, y, p = rows[i]
        if p not in (1, -1) or t < 0:
            raise EventFileError("malformed-record", f"{line!r}: bad polarity or timestamp", i + 2)
        if not (0 <= x < geometry.width and 0 <= y < geometry.height):
            raise EventFileError(
                "out-of-bounds-event", f"({x},{y}) outside {geometry.width}x{geometry.height}", i + 2
            )
        if i and t < rows[i - 1, 0]:
            raise EventFileError("non-monotonic-timestamp", f"t={t} after t={rows[i - 1, 0]}", i + 2)
    stream = EventStream(geometry, rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3])
    return rebase(stream)


def write_event_file(stream: EventStream) -> bytes:
    g = stream.geometry
    out = [f"{MAGIC} {g.width} {g.height}\n"]
    out.extend(
        f"{t} {x} {y} {p}\n"
        for t, x, y, p in zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist())
    )
    return "".join(out).encode("ascii")


def load_event_file(path: str | os.PathLike) -> EventStream:
    with open(path, "rb") as fh:
        return parse_event_file(fh.read())


def save_event_file(path: str | os.PathLike, stream: EventStream) -> None:
    with open(path, "wb") as fh:
        fh.write(write_event_file(stream))
