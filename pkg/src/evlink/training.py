"""Alternating adversarial training of the generators, classifier and discriminator.

Each step first updates the discriminator on frozen embeddings (Adam),
then updates generators and classifier on
``alpha * L_id + beta * L_ct - gamma * L_dis`` with the discriminator held
fixed (SGD with momentum).
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .checkpoint import Checkpoint
from .dataset import DatasetManifest, load_color_image
from .encoders import EncoderConfig, assemble_event_image, assemble_whole_bin
from .events import BinSpec, EventStream, partition_bins
from .evt import load_event_file
from .imaging import resize_bilinear, rotate
from .losses import (
    loss_contrastive,
    loss_discriminator_from_logits,
    loss_identity_from_logits,
    loss_total,
)
from .nets import NetworkSpec, ParameterSet, classifier_logits, discriminator_logit, forward_generator, init_params
from .optim import Adam, SGDMomentum

log = logging.getLogger(__name__)

ABLATIONS = ("nws", "ntc", "nal")
ROTATION_ANGLES = tuple(-45.0 + 11.25 * i for i in range(9))


class ConfigError(ValueError):
    pass


class InsufficientInstances(ValueError):
    pass


class NumericDivergence(FloatingPointError):
    """Non-finite loss or parameters; ``checkpoint`` holds the last finite state."""

    def __init__(self, message: str, checkpoint: Checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 0.01
    gamma: float = 0.01
    margin: float = 1.0
    batch_size: int = 8
    max_epochs: int = 20
    seed: int = 0
    ablations: list = field(default_factory=list)
    pos_ratio: float = 0.5
    augment: bool = True
    # encoding
    method: str = "EF"
    image_size: int = 224
    tau_e: float = 30_000.0
    saturation_cap: int = 8
    bin_duration: int = 90_000
    sub_bins: int = 3
    # network
    conv_channels: list = field(default_factory=lambda: [8, 16, 32])
    embed_dim: int = 64
    disc_hidden: int = 32
    # optimisers
    lr_g: float = 0.001
    momentum: float = 0.9
    lr_d: float = 0.002
    adam_beta1: float = 0.5
    adam_beta2: float = 0.99

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.margin <= 0:
            raise ConfigError("margin must be > 0")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        bad = [a for a in self.ablations if a not in ABLATIONS]
        if bad:
            raise ConfigError(f"unknown ablation(s) {bad}; choose from {ABLATIONS}")
        self.ablations = sorted(set(self.ablations))
        self.conv_channels = list(self.conv_channels)
        if not 0 <= self.pos_ratio <= 1:
            raise ConfigError("pos_ratio must be in [0, 1]")

    @property
    def effective_gamma(self) -> float:
        return 0.0 if "nal" in self.ablations else self.gamma

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.method, self.tau_e, self.saturation_cap, self.image_size)

    def bin_spec(self) -> BinSpec:
        return BinSpec(self.bin_duration, self.sub_bins)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict, require_all: bool = False) -> "TrainConfig":
        names = [f.name for f in dataclasses.fields(cls)]
        unknown = sorted(set(doc) - set(names))
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        if require_all:
            missing = [n for n in names if n not in doc]
            if missing:
                raise ConfigError(f"missing config field(s): {', '.join(missing)}")
        return cls(**doc)


# ------------------------------------------------------------------ data


def augment(img: np.ndarray, seed: int) -> np.ndarray:
    """Rotate a square (C, H, W) image by one of nine angles in [-45, 45] deg, maybe flip it."""
    rng = np.random.default_rng(seed)
    angle = ROTATION_ANGLES[int(rng.integers(len(ROTATION_ANGLES)))]
    flip = bool(rng.integers(2))
    return apply_augmentation(img, angle, flip)


def apply_augmentation(img: np.ndarray, angle: float, flip: bool) -> np.ndarray:
    if img.shape[-1] != img.shape[-2]:
        raise ValueError("augmentation expects square images")
    out = rotate(img, angle)
    return out[..., ::-1].copy() if flip else out


@dataclass
class Pool:
    """Encoded training tensors. Labels index ``instance_ids``."""

    event_images: np.ndarray  # (Ne, sub_bins, S, S) float32
    event_labels: np.ndarray
    color_images: np.ndarray  # (Nr, 3, S, S) float32
    color_labels: np.ndarray
    instance_ids: list


@dataclass
class Batch:
    e: np.ndarray
    r: np.ndarray
    s: np.ndarray
    label_e: np.ndarray
    label_r: np.ndarray

    def __len__(self):
        return len(self.s)


def encode_stream_bins(stream: EventStream, cfg: TrainConfig) -> list[np.ndarray]:
    """Event images (as arrays) for every full bin of a stream."""
    enc = cfg.encoder()
    out = []
    for bin_ in partition_bins(stream, cfg.bin_spec()):
        if "ntc" in cfg.ablations:
            img = assemble_whole_bin(bin_, enc)
        else:
            img = assemble_event_image(bin_, enc, cfg.sub_bins)
        out.append(img.values.astype(np.float32))
    return out


def color_tensor(path, size: int) -> np.ndarray:
    rgb = load_color_image(path)
    return resize_bilinear(rgb.transpose(2, 0, 1), size).astype(np.float32)


def load_pool(manifest: DatasetManifest, cfg: TrainConfig) -> Pool:
    ev, ev_lab, col, col_lab = [], [], [], []
    ids = []
    for label, rec in enumerate(manifest.instances):
        ids.append(rec.id)
        stream = load_event_file(manifest.resolve(rec.events))
        bins = encode_stream_bins(stream, cfg)
        if not bins:
            log.warning("instance %s: stream has no full bin, skipped as query source", rec.id)
        ev.extend(bins)
        ev_lab.extend([label] * len(bins))
        for img in rec.images:
            col.append(color_tensor(manifest.resolve(img), cfg.image_size))
            col_lab.append(label)
    s = cfg.image_size
    return Pool(
        np.stack(ev) if ev else np.zeros((0, cfg.sub_bins, s, s), np.float32),
        np.array(ev_lab, dtype=np.int64),
        np.stack(col) if col else np.zeros((0, 3, s, s), np.float32),
        np.array(col_lab, dtype=np.int64),
        ids,
    )


def sample_batch(pool: Pool, n: int, pos_ratio: float, seed: int, event_idx: Sequence[int] | None = None) -> Batch:
    """Pair ``n`` event images with colour images; round(pos_ratio * n) pairs share an instance."""
    labels_with_color = np.unique(pool.color_labels)
    if len(labels_with_color) < 2 or len(pool.event_labels) == 0:
        raise InsufficientInstances("need colour images of at least 2 instances and one event image")
    rng = np.random.default_rng(seed)
    if event_idx is None:
        event_idx = rng.integers(len(pool.event_labels), size=n)
    event_idx = np.asarray(event_idx, dtype=np.int64)
    n = len(event_idx)
    npos = int(round(pos_ratio * n))
    flags = rng.permutation(np.r_[np.ones(npos, dtype=np.int64), np.zeros(n - npos, dtype=np.int64)])
    color_idx = np.empty(n, dtype=np.int64)
    for i, (ei, pos) in enumerate(zip(event_idx, flags)):
        lab = pool.event_labels[ei]
        same = pool.color_labels == lab
        cand = np.flatnonzero(same if pos else ~same)
        if len(cand) == 0:
            raise InsufficientInstances(f"no {'positive' if pos else 'negative'} colour image for label {lab}")
        color_idx[i] = cand[rng.integers(len(cand))]
    label_e = pool.event_labels[event_idx]
    label_r = pool.color_labels[color_idx]
    return Batch(
        pool.event_images[event_idx],
        pool.color_images[color_idx],
        (label_e == label_r).astype(np.int64),
        label_e,
        label_r,
    )


def augment_batch(batch: Batch, rng: np.random.Generator) -> Batch:
    seeds = rng.integers(0, 2**31, size=2 * len(batch))
    e = np.stack([augment(img, int(sd)) for img, sd in zip(batch.e, seeds[::2])])
    r = np.stack([augment(img, int(sd)) for img, sd in zip(batch.r, seeds[1::2])])
    return dataclasses.replace(batch, e=e.astype(np.float32), r=r.astype(np.float32))


# ------------------------------------------------------------------ optimisation


@dataclass
class StepReport:
    L_dis: float
    L_id: float
    L_ct: float
    L: float

    def finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.L_dis, self.L_id, self.L_ct, self.L))


@dataclass
class Optimizers:
    d: Adam
    g: SGDMomentum

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "Optimizers":
        return cls(
            Adam(lr=cfg.lr_d, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2),
            SGDMomentum(lr=cfg.lr_g, momentum=cfg.momentum),
        )


def _frozen(params: dict) -> ParameterSet:
    return ParameterSet({k: Tensor(t.data) for k, t in params.items()})


def discriminator_step(batch: Batch, params: ParameterSet, spec: NetworkSpec, opt: Adam) -> float:
    """Update only the discriminator on embeddings from frozen generators; returns L_dis before the step."""
    frozen = _frozen(params.tensors)
    f_e = forward_generator(spec, frozen, batch.e, "event").detach()
    f_r = forward_generator(spec, frozen, batch.r, "color").detach()
    d_params = params.group("D")
    l_dis = loss_discriminator_from_logits(discriminator_logit(params, f_e), discriminator_logit(params, f_r))
    grads = ag.backprop(l_dis, d_params)
    opt.step(d_params, grads)
    return l_dis.item()


def generator_loss(batch: Batch, params: ParameterSet, spec: NetworkSpec, cfg: TrainConfig):
    """Build the combined objective with the discriminator detached; returns (L, parts)."""
    f_e = forward_generator(spec, params, batch.e, "event")
    f_r = forward_generator(spec, params, batch.r, "color")
    # negative pairs: each side is scored against its own instance label
    l_id = loss_identity_from_logits(
        classifier_logits(params, f_e), classifier_logits(params, f_r), batch.label_e, batch.label_r
    )
    l_ct = loss_contrastive(f_e, f_r, batch.s, cfg.margin)
    d_fixed = _frozen(params.group("D"))
    gamma = cfg.effective_gamma
    l_dis = loss_discriminator_from_logits(discriminator_logit(d_fixed, f_e), discriminator_logit(d_fixed, f_r))
    if gamma == 0:
        l_dis = l_dis.detach()
    total = loss_total(l_id, l_ct, l_dis, cfg.alpha, cfg.beta, gamma)
    return total, (l_id, l_ct, l_dis)


def train_step(batch: Batch, params: ParameterSet, spec: NetworkSpec, cfg: TrainConfig, opts: Optimizers) -> StepReport:
    if "nal" not in cfg.ablations:
        discriminator_step(batch, params, spec, opts.d)
    total, (l_id, l_ct, l_dis) = generator_loss(batch, params, spec, cfg)
    report = StepReport(l_dis.item(), l_id.item(), l_ct.item(), total.item())
    if not report.finite():
        return report
    gc = params.group("G", "C")
    grads = ag.backprop(total, gc)
    opts.g.step(gc, grads)
    return report


# ------------------------------------------------------------------ fit


def network_for(cfg: TrainConfig, num_classes: int) -> NetworkSpec:
    return NetworkSpec(
        num_classes=num_classes,
        input_size=cfg.image_size,
        event_channels=cfg.sub_bins,
        color_channels=3,
        conv_channels=tuple(cfg.conv_channels),
        embed_dim=cfg.embed_dim,
        disc_hidden=cfg.disc_hidden,
        weight_sharing="nws" not in cfg.ablations,
    )


def _round(v: float) -> float:
    return float(f"{v:.9g}")


def fit(
    data: DatasetManifest | Pool,
    cfg: TrainConfig,
    on_epoch: Callable[[dict], None] | None = None,
) -> Checkpoint:
    """Run ``cfg.max_epochs`` epochs of alternating updates; deterministic in ``cfg.seed``.

    An epoch visits every event image once, ``batch_size`` at a time (the last
    batch wraps around to stay full). ``on_epoch`` receives one metric record
    per epoch, including wall time; the returned checkpoint history omits it.
    """
    pool = data if isinstance(data, Pool) else load_pool(data, cfg)
    if len(pool.event_labels) == 0:
        raise InsufficientInstances("no event images to train on")
    spec = network_for(cfg, len(pool.instance_ids))
    root = np.random.default_rng(cfg.seed)
    params = init_params(spec, int(root.integers(2**31)))
    rng = np.random.default_rng(root.integers(2**31))
    opts = Optimizers.from_config(cfg)
    history = []
    n, ne = cfg.batch_size, len(pool.event_labels)
    steps = max(1, math.ceil(ne / n))
    config = cfg.to_dict()

    def snapshot(epoch):
        return Checkpoint(spec, _frozen_copy(params), dict(config, instance_ids=pool.instance_ids), epoch, list(history))

    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        order = rng.permutation(ne)
        order = np.resize(order, steps * n)
        sums = np.zeros(4)
        for k in range(steps):
            batch = sample_batch(pool, n, cfg.pos_ratio, int(rng.integers(2**31)), order[k * n : (k + 1) * n])
            if cfg.augment:
                batch = augment_batch(batch, rng)
            before = params.snapshot()
            # overflow shows up as a non-finite report and is handled below
            with np.errstate(over="ignore", invalid="ignore"):
                report = train_step(batch, params, spec, cfg, opts)
            if not report.finite() or not all(np.all(np.isfinite(t.data)) for _, t in params.items()):
                for name, arr in before.items():
                    params[name].data = arr
                raise NumericDivergence(
                    f"non-finite loss at epoch {epoch + 1} step {k + 1}: {report}", snapshot(epoch)
                )
            sums += (report.L_dis, report.L_id, report.L_ct, report.L)
        means = sums / steps
        record = {"epoch": epoch + 1, **{k: _round(v) for k, v in zip(("L_dis", "L_id", "L_ct", "L"), means)}}
        history.append(record)
        log.info("epoch %d  L_dis=%.4f L_id=%.4f L_ct=%.4f L=%.4f", *record.values())
        if on_epoch is not None:
            on_epoch(dict(record, wall_time=round(time.perf_counter() - t0, 3)))
    return snapshot(cfg.max_epochs)


def _frozen_copy(params: ParameterSet) -> ParameterSet:
    return ParameterSet({k: Tensor(t.data.copy(), requires_grad=True) for k, t in params.items()})


def metric_log_writer(path) -> Callable[[dict], None]:
    """Append one JSON object per epoch to ``path``."""
    fh = open(path, "w")

    def write(record):
        fh.write(json.dumps(record) + "\n")
        fh.flush()

    write.close = fh.close
    return write
