"""Ideal DVS event generation from a translating intensity image.

Each pixel keeps a reference log intensity. At every sample step the
translated image is re-sampled; when the log intensity has moved by at
least one threshold ``C`` from the reference, ``floor(|dL| / C)`` events
are emitted with timestamps interpolated linearly inside the step, and the
reference advances by that many thresholds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventStream, SensorGeometry
from .imaging import bilinear_sample


class DegenerateTrajectory(ValueError):
    pass


@dataclass(frozen=True)
class IntensityFrame:
    geometry: SensorGeometry
    pixels: np.ndarray  # (height, width), linear intensity in (0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.geometry.height, self.geometry.width):
            raise ValueError(f"pixel grid {px.shape} does not match geometry {self.geometry}")
        if not np.all(px > 0):
            raise ValueError("intensities must be strictly positive")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, pixels) -> "IntensityFrame":
        px = np.asarray(pixels, dtype=np.float64)
        return cls(SensorGeometry(px.shape[1], px.shape[0]), px)


@dataclass(frozen=True)
class MotionTrajectory:
    t: np.ndarray  # microseconds, strictly increasing
    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64)
        dx = np.asarray(self.dx, dtype=np.float64)
        dy = np.asarray(self.dy, dtype=np.float64)
        if not (t.shape == dx.shape == dy.shape) or t.ndim != 1:
            raise ValueError("trajectory columns must be 1-D and equal length")
        if len(t) < 2:
            raise DegenerateTrajectory("trajectory needs at least 2 samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)

    @classmethod
    def linear(cls, duration_us: int, dx: float, dy: float = 0.0) -> "MotionTrajectory":
        return cls(np.array([0, duration_us]), np.array([0.0, dx]), np.array([0.0, dy]))

    @classmethod
    def lissajous(cls, duration_us: int, amplitude: float, period_us: int, step_us: int = 1000):
        t = np.arange(0, duration_us + 1, step_us)
        ph = 2 * np.pi * t / period_us
        return cls(t, amplitude * np.sin(ph), amplitude * np.sin(2 * ph))


@dataclass(frozen=True)
class SimulatorConfig:
    threshold: float = 0.3
    frame_rate: float = 1000.0
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.threshold <= 0 or self.frame_rate <= 0 or self.epsilon <= 0:
            raise ValueError("threshold, frame_rate and epsilon must be > 0")


def sample_times(traj: MotionTrajectory, cfg: SimulatorConfig):
    """Sample instants (integer us) and interpolated offsets along the trajectory."""
    t0, t1 = int(traj.t[0]), int(traj.t[-1])
    period = 1e6 / cfg.frame_rate
    n = int(np.floor((t1 - t0) / period)) + 1
    ts = t0 + np.round(np.arange(n) * period).astype(np.int64)
    if ts[-1] != t1:
        ts = np.append(ts, t1)
    dx = np.interp(ts, traj.t, traj.dx)
    dy = np.interp(ts, traj.t, traj.dy)
    return ts, dx, dy


def render_shifted(pixels: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """The image translated by (dx, dy), border pixels replicated."""
    h, w = pixels.shape
    gy, gx = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    return bilinear_sample(pixels, gx - dx, gy - dy, mode="edge")


def simulate_dvs(image: IntensityFrame, traj: MotionTrajectory, cfg: SimulatorConfig = SimulatorConfig()):
    """Simulate the event stream produced while ``image`` moves along ``traj``.

    Output timestamps are relative to the first trajectory sample, and the
    stream's span covers the whole trajectory.
    """
    ts, dxs, dys = sample_times(traj, cfg)
    h, w = image.pixels.shape
    C = cfg.threshold

    def log_frame(k):
        return np.log(np.maximum(render_shifted(image.pixels, dxs[k], dys[k]), cfg.epsilon))

    l_prev = log_frame(0).ravel()
    l_ref = l_prev.copy()
    chunks = []
    for k in range(1, len(ts)):
        l_cur = log_frame(k).ravel()
        diff = l_cur - l_ref
        n = np.floor(np.abs(diff) / C).astype(np.int64)
        idx = np.flatnonzero(n)
        if len(idx):
            counts = n[idx]
            pix = np.repeat(idx, counts)
            sign = np.sign(diff[pix])
            # j-th crossing of this step, j = 1..counts
            j = np.arange(len(pix)) - np.repeat(np.cumsum(counts) - counts, counts) + 1
            level = l_ref[pix] + sign * j * C
            span = l_cur[pix] - l_prev[pix]
            frac = np.clip((level - l_prev[pix]) / span, 0.0, 1.0)
            t_ev = np.floor(ts[k - 1] + frac * (ts[k] - ts[k - 1])).astype(np.int64)
            chunks.append((t_ev, pix % w, pix // w, sign.astype(np.int8)))
            l_ref[idx] += np.sign(diff[idx]) * counts * C
        l_prev = l_cur

    span = (0, int(ts[-1] - ts[0]) + 1)
    if not chunks:
        return EventStream(image.geometry, span=span)
    t, x, y, p = (np.concatenate(c) for c in zip(*chunks))
    order = np.lexsort((x, y, t))
    return EventStream(image.geometry, t[order] - ts[0], x[order], y[order], p[order], span=span)
