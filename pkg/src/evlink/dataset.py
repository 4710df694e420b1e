"""Labelled toy datasets and the JSON manifest that pairs streams with images.

Every instance is a parametric shape (polygon, ellipse, ring, stripes
patch, cross) with its own fill colour and texture. Colour renderings vary
background colour, rotation, scale and offset; the event stream is
simulated from one further rendering that is moved along a small
Lissajous path.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .evt import save_event_file
from .imaging import luminance
from .simulator import IntensityFrame, MotionTrajectory, SimulatorConfig, simulate_dvs

SHAPES = ("polygon", "ellipse", "ring", "stripes", "cross")
TEXTURES = ("solid", "hstripes", "checker", "gradient")
SUPERSAMPLE = 4


class ManifestError(ValueError):
    pass


@dataclass
class InstanceRecord:
    id: str
    events: str
    images: list


@dataclass
class DatasetManifest:
    instances: list = field(default_factory=list)
    root: Path = Path(".")

    def __post_init__(self):
        ids = [r.id for r in self.instances]
        if len(set(ids)) != len(ids):
            raise ManifestError("instance ids must be unique")
        for r in self.instances:
            if not r.events or not r.images:
                raise ManifestError(f"instance {r.id!r} needs an event stream and at least one image")

    @property
    def num_event_streams(self) -> int:
        return len(self.instances)

    @property
    def num_images(self) -> int:
        return sum(len(r.images) for r in self.instances)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def to_json(self) -> str:
        doc = {"instances": [{"id": r.id, "events": r.events, "images": list(r.images)} for r in self.instances]}
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
            recs = [InstanceRecord(str(r["id"]), r["events"], list(r["images"])) for r in doc["instances"]]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ManifestError(f"{path}: malformed manifest ({exc})") from exc
        return cls(recs, path.parent)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_json())


# ------------------------------------------------------------------ rendering


@dataclass(frozen=True)
class ShapeParams:
    kind: str
    sides: int
    aspect: float
    color: tuple
    color2: tuple
    texture: str
    tex_freq: float
    base_angle: float


def random_shape(rng: np.random.Generator, index: int) -> ShapeParams:
    # cycle the kind so that small datasets still cover every shape family
    kind = SHAPES[index % len(SHAPES)]
    c1 = rng.uniform(0.05, 1.0, 3)
    c2 = 1.0 - c1 * rng.uniform(0.3, 1.0)
    return ShapeParams(
        kind=kind,
        sides=int(rng.integers(3, 8)),
        aspect=float(rng.uniform(0.45, 1.0)),
        color=tuple(float(v) for v in c1),
        color2=tuple(float(v) for v in c2),
        texture=TEXTURES[int(rng.integers(len(TEXTURES)))],
        tex_freq=float(rng.uniform(2.0, 5.0)),
        base_angle=float(rng.uniform(0, np.pi)),
    )


def _mask(sp: ShapeParams, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Membership on normalised coordinates (shape radius ~1)."""
    r = np.hypot(u, v)
    if sp.kind == "ellipse":
        return (u / 1.0) ** 2 + (v / sp.aspect) ** 2 <= 1.0
    if sp.kind == "ring":
        return (r <= 1.0) & (r >= 0.35 + 0.3 * (1 - sp.aspect))
    if sp.kind == "stripes":
        inside = (np.abs(u) <= 0.9) & (np.abs(v) <= 0.9 * sp.aspect + 0.1)
        return inside & (np.cos(u * np.pi * (sp.sides - 0.5)) > 0)
    if sp.kind == "cross":
        w = 0.2 + 0.2 * sp.aspect
        return ((np.abs(u) <= w) & (np.abs(v) <= 1.0)) | ((np.abs(v) <= w) & (np.abs(u) <= 1.0))
    # regular polygon: inside all half-planes
    ang = np.arctan2(v, u)
    sector = 2 * np.pi / sp.sides
    a = np.mod(ang, sector) - sector / 2
    return r * np.cos(a) <= np.cos(sector / 2)


def _texture(sp: ShapeParams, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Blend weight in [0, 1] between the two fill colours."""
    f = sp.tex_freq
    if sp.texture == "hstripes":
        return (np.sin(v * np.pi * f) > 0).astype(float)
    if sp.texture == "checker":
        return ((np.floor(u * f) + np.floor(v * f)) % 2).astype(float)
    if sp.texture == "gradient":
        return np.clip((u + 1) / 2, 0, 1)
    return np.zeros_like(u)


def render(sp: ShapeParams, size: int, background, angle: float = 0.0, scale: float = 0.7, offset=(0.0, 0.0)):
    """Antialiased HxWx3 rendering in [0, 1]."""
    n = size * SUPERSAMPLE
    c = (np.arange(n) + 0.5) / n * 2 - 1
    gy, gx = np.meshgrid(c, c, indexing="ij")
    gx = gx - offset[0]
    gy = gy - offset[1]
    a = sp.base_angle + angle
    ca, sa = np.cos(a), np.sin(a)
    u = (ca * gx + sa * gy) / scale
    v = (-sa * gx + ca * gy) / scale
    inside = _mask(sp, u, v).astype(float)
    t = _texture(sp, u, v)[..., None]
    fg = (1 - t) * np.array(sp.color) + t * np.array(sp.color2)
    img = inside[..., None] * fg + (1 - inside[..., None]) * np.asarray(background, dtype=float)
    return img.reshape(size, SUPERSAMPLE, size, SUPERSAMPLE, 3).mean(axis=(1, 3))


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)


def save_png(path, img: np.ndarray) -> None:
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def save_pgm(path, gray: np.ndarray) -> None:
    Image.fromarray(to_uint8(gray), mode="L").save(path, format="PPM")


def load_color_image(path) -> np.ndarray:
    """HxWx3 float64 in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def load_intensity(path, epsilon: float = 1e-3) -> np.ndarray:
    """Grey (PGM) or colour image -> luminance in [epsilon, 1]."""
    with Image.open(path) as im:
        if im.mode in ("L", "I", "F"):
            gray = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        else:
            gray = luminance(np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0)
    return np.maximum(gray, epsilon)


def generate_toy_dataset(
    out_dir: str | os.PathLike,
    num_instances: int,
    images_per_instance: int,
    seed: int,
    size: int = 32,
    duration_us: int = 300_000,
    sim: SimulatorConfig = SimulatorConfig(),
) -> DatasetManifest:
    """Render a deterministic toy dataset under ``out_dir`` and write ``manifest.json``."""
    if num_instances < 2:
        raise ValueError("need at least 2 instances")
    if images_per_instance < 1:
        raise ValueError("need at least 1 image per instance")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "events").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(num_instances):
        sp = random_shape(rng, i)
        iid = f"inst{i:04d}"
        images = []
        for j in range(images_per_instance):
            bg = rng.uniform(0.0, 1.0, 3)
            img = render(
                sp,
                size,
                bg,
                angle=float(rng.uniform(-0.5, 0.5)),
                scale=float(rng.uniform(0.6, 0.8)),
                offset=tuple(rng.uniform(-0.1, 0.1, 2)),
            )
            rel = f"images/{iid}_{j}.png"
            save_png(out / rel, img)
            images.append(rel)
        # event source: the shape on a grey background chosen to contrast with it
        fg_lum = float(luminance(np.array([sp.color, sp.color2])).mean())
        grey = rng.uniform(0.03, 0.15) if fg_lum > 0.4 else rng.uniform(0.75, 0.95)
        src = render(sp, size, np.full(3, grey), angle=float(rng.uniform(-0.5, 0.5)), scale=0.7)
        gray_rel = f"events/{iid}.pgm"
        save_pgm(out / gray_rel, luminance(src))
        frame = IntensityFrame.from_array(load_intensity(out / gray_rel, sim.epsilon))
        traj = MotionTrajectory.lissajous(duration_us, amplitude=2.0, period_us=90_000)
        stream = simulate_dvs(frame, traj, sim)
        ev_rel = f"events/{iid}.evt"
        save_event_file(out / ev_rel, stream)
        records.append(InstanceRecord(iid, ev_rel, images))
    manifest = DatasetManifest(records, out)
    manifest.save(out / "manifest.json")
    return manifest
