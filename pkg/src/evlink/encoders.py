"""Event Stacking, Time Surface and Event Frequency channel encoders.

Each encoder turns one (sub-)stream into a single channel over the full
sensor grid. :func:`assemble_event_image` stacks one channel per temporal
sub-bin into a fixed-size event image.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .events import EventStream, window
from .imaging import resize_bilinear

METHODS = ("ES", "TS", "EF")


class InvalidReference(ValueError):
    pass


class ChannelCountMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    method: str = "EF"
    tau_e: float = 30_000.0
    saturation_cap: int = 8
    output_size: int = 224

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.tau_e <= 0:
            raise ValueError("tau_e must be > 0")
        if self.saturation_cap < 1:
            raise ValueError("saturation_cap must be >= 1")
        if self.output_size <= 0:
            raise ValueError("output_size must be > 0")


@dataclass
class EventImage:
    """``values`` has shape (channels, size, size), entries in [0, 1]."""

    values: np.ndarray
    method: str = "EF"

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def _counts(sub: EventStream) -> np.ndarray:
    g = sub.geometry
    flat = np.bincount(sub.y * g.width + sub.x, minlength=g.width * g.height)
    return flat.reshape(g.height, g.width)


def encode_stacking(sub: EventStream) -> np.ndarray:
    """Per-pixel event count, polarity ignored."""
    return _counts(sub).astype(np.float64)


def encode_time_surface(sub: EventStream, tau_e: float, t_ref: int) -> np.ndarray:
    """exp((SAE - t_ref) / tau_e) over the whole grid; 0 where no event fired."""
    g = sub.geometry
    if len(sub) and int(sub.t.max()) > t_ref:
        raise InvalidReference(f"t_ref {t_ref} precedes event at t={int(sub.t.max())}")
    sae = np.full(g.width * g.height, -1, dtype=np.int64)
    np.maximum.at(sae, sub.y * g.width + sub.x, sub.t)
    out = np.zeros(g.width * g.height)
    seen = sae >= 0
    out[seen] = np.exp((sae[seen] - t_ref) / tau_e)
    return out.reshape(g.height, g.width)


def frequency_response(n):
    # exp overflows to inf for n > ~709, where the response is exactly 1
    with np.errstate(over="ignore"):
        return 1.0 - 2.0 / (np.exp(n) + 1.0)


def encode_frequency(sub: EventStream) -> np.ndarray:
    """1 - 2 / (exp(n) + 1) of the per-pixel event count n."""
    return frequency_response(_counts(sub).astype(np.float64))


def encode_channel(sub: EventStream, cfg: EncoderConfig) -> np.ndarray:
    """Raw channel for one sub-stream, normalised into [0, 1]."""
    if cfg.method == "ES":
        return np.minimum(encode_stacking(sub) / cfg.saturation_cap, 1.0)
    if cfg.method == "TS":
        t_ref = sub.end_time if sub.span is not None else (int(sub.t[-1]) if len(sub) else 0)
        return encode_time_surface(sub, cfg.tau_e, t_ref)
    return encode_frequency(sub)


def assemble_event_image(bin_: Sequence[EventStream], cfg: EncoderConfig, sub_bins: int | None = None) -> EventImage:
    """One channel per sub-bin, in temporal order, resized to ``output_size``."""
    if sub_bins is not None and len(bin_) != sub_bins:
        raise ChannelCountMismatch(f"expected {sub_bins} sub-bins, got {len(bin_)}")
    if not len(bin_):
        raise ChannelCountMismatch("bin has no sub-bins")
    chans = [resize_bilinear(encode_channel(sub, cfg), cfg.output_size) for sub in bin_]
    return EventImage(np.clip(np.stack(chans), 0.0, 1.0), cfg.method)


def assemble_whole_bin(bin_: Sequence[EventStream], cfg: EncoderConfig) -> EventImage:
    """Temporal-channel ablation: encode the whole bin once, replicate per channel."""
    first, last = bin_[0], bin_[-1]
    if first.span is not None and last.span is not None:
        start, end = first.span[0], last.span[1]
    else:
        ts = [s.t for s in bin_ if len(s)]
        start = int(min(t[0] for t in ts)) if ts else 0
        end = int(max(t[-1] for t in ts)) + 1 if ts else 0
    merged = EventStream(
        first.geometry,
        np.concatenate([s.t for s in bin_]),
        np.concatenate([s.x for s in bin_]),
        np.concatenate([s.y for s in bin_]),
        np.concatenate([s.p for s in bin_]),
    )
    whole = window(merged, start, end)
    chan = np.clip(resize_bilinear(encode_channel(whole, cfg), cfg.output_size), 0.0, 1.0)
    return EventImage(np.stack([chan] * len(bin_)), cfg.method)


def save_event_image(path: str | os.PathLike, img: EventImage) -> None:
    """Raw little-endian float32, channel-major, plus a ``<path>.json`` sidecar."""
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(img.values, dtype="<f4").tobytes())
    meta = {"w": img.width, "h": img.height, "c": img.channels, "method": img.method}
    with open(f"{path}.json", "w") as fh:
        json.dump(meta, fh)


def load_event_image(path: str | os.PathLike) -> EventImage:
    with open(f"{path}.json") as fh:
        meta = json.load(fh)
    raw = np.fromfile(path, dtype="<f4")
    return EventImage(raw.reshape(meta["c"], meta["h"], meta["w"]).astype(np.float64), meta["method"])
