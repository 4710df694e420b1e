"""Feature generators, identity classifier and modality discriminator.

Parameter names carry their group as a prefix: ``G.`` (shared generator),
``Ge.``/``Gr.`` (separate event/colour generators), ``C.`` and ``D.``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    num_classes: int
    input_size: int = 224
    event_channels: int = 3
    color_channels: int = 3
    conv_channels: tuple = (8, 16, 32)
    embed_dim: int = 64
    disc_hidden: int = 32
    weight_sharing: bool = True

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        if self.weight_sharing and self.event_channels != self.color_channels:
            raise ValueError("weight sharing needs equal event and colour channel counts")
        if self.input_size < 2 ** len(self.conv_channels):
            raise ValueError("input_size too small for the pooling depth")

    @property
    def feature_size(self) -> int:
        s = self.input_size
        for _ in self.conv_channels:
            s //= 2
        return s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d


@dataclass
class ParameterSet:
    """Ordered named parameters; iteration order is the checkpoint order."""

    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def group(self, *groups: str) -> dict:
        """Sub-mapping of the parameters whose prefix is one of ``groups`` (G covers Ge/Gr)."""
        out = {}
        for name, t in self.tensors.items():
            prefix = name.split(".", 1)[0]
            if prefix in groups or ("G" in groups and prefix in ("Ge", "Gr")):
                out[name] = t
        return out

    def snapshot(self) -> dict:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet({k: Tensor(t.data.astype(dtype), requires_grad=True) for k, t in self.tensors.items()})


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype):
    # He-uniform bound keeps ReLU activations from shrinking layer to layer
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _generator_params(spec: NetworkSpec, prefix: str, in_ch: int, rng, dtype) -> dict:
    out = {}
    c = in_ch
    for i, o in enumerate(spec.conv_channels):
        fan = c * 9
        out[f"{prefix}.conv{i}.w"] = _uniform(rng, (o, c, 3, 3), fan, dtype)
        out[f"{prefix}.conv{i}.b"] = _uniform(rng, (o,), fan, dtype)
        c = o
    fan = c * spec.feature_size**2
    out[f"{prefix}.fc.w"] = _uniform(rng, (fan, spec.embed_dim), fan, dtype)
    out[f"{prefix}.fc.b"] = _uniform(rng, (spec.embed_dim,), fan, dtype)
    return out


def init_params(spec: NetworkSpec, seed: int, dtype=np.float32) -> ParameterSet:
    """Fan-in scaled (He) uniform initialisation, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    raw = {}
    if spec.weight_sharing:
        raw.update(_generator_params(spec, "G", spec.event_channels, rng, dtype))
    else:
        raw.update(_generator_params(spec, "Ge", spec.event_channels, rng, dtype))
        raw.update(_generator_params(spec, "Gr", spec.color_channels, rng, dtype))
    d = spec.embed_dim
    raw["C.w"] = _uniform(rng, (d, spec.num_classes), d, dtype)
    raw["C.b"] = _uniform(rng, (spec.num_classes,), d, dtype)
    raw.update(_discriminator_params(d, spec.disc_hidden, rng, dtype))
    return ParameterSet({k: Tensor(v, requires_grad=True) for k, v in raw.items()})


def _discriminator_params(d: int, h: int, rng, dtype) -> dict:
    return {
        "D.fc0.w": _uniform(rng, (d, h), d, dtype),
        "D.fc0.b": _uniform(rng, (h,), d, dtype),
        "D.fc1.w": _uniform(rng, (h, 1), h, dtype),
        "D.fc1.b": _uniform(rng, (1,), h, dtype),
    }


def init_discriminator(embed_dim: int, hidden: int, seed: int, dtype=np.float32) -> ParameterSet:
    """A stand-alone discriminator, e.g. for probing frozen embeddings."""
    raw = _discriminator_params(embed_dim, hidden, np.random.default_rng(seed), dtype)
    return ParameterSet({k: Tensor(v, requires_grad=True) for k, v in raw.items()})


def _generator_prefix(spec: NetworkSpec, modality: str) -> str:
    if modality not in ("event", "color"):
        raise ValueError(f"unknown modality {modality!r}")
    if spec.weight_sharing:
        return "G"
    return "Ge" if modality == "event" else "Gr"


def forward_generator(spec: NetworkSpec, params: ParameterSet, x, modality: str) -> Tensor:
    """Embed a (N, C, H, W) or (C, H, W) image batch; returns (N, d) (or (d,) for one image)."""
    x = ag.as_tensor(x)
    single = x.data.ndim == 3
    if single:
        x = x.reshape((1,) + x.shape)
    want_c = spec.event_channels if modality == "event" else spec.color_channels
    if x.data.ndim != 4 or x.shape[1:] != (want_c, spec.input_size, spec.input_size):
        raise ShapeMismatch(
            f"{modality} input must be (N, {want_c}, {spec.input_size}, {spec.input_size}), got {x.shape}"
        )
    pre = _generator_prefix(spec, modality)
    h = x
    for i in range(len(spec.conv_channels)):
        h = ag.maxpool2(ag.relu(ag.conv2d(h, params[f"{pre}.conv{i}.w"], params[f"{pre}.conv{i}.b"])))
    h = h.reshape((h.shape[0], -1))
    f = h @ params[f"{pre}.fc.w"] + params[f"{pre}.fc.b"]
    return f.reshape((spec.embed_dim,)) if single else f


def classifier_logits(params: ParameterSet, f) -> Tensor:
    return ag.as_tensor(f) @ params["C.w"] + params["C.b"]


def forward_classifier(params: ParameterSet, f) -> Tensor:
    """Softmax probabilities over instances, shape (N, N_ins)."""
    f = ag.as_tensor(f)
    if f.data.ndim == 1:
        f = f.reshape((1, -1))
    return ag.softmax(classifier_logits(params, f))


def discriminator_logit(params: ParameterSet, f) -> Tensor:
    f = ag.as_tensor(f)
    if f.data.ndim == 1:
        f = f.reshape((1, -1))
    h = ag.relu(f @ params["D.fc0.w"] + params["D.fc0.b"])
    return (h @ params["D.fc1.w"] + params["D.fc1.b"]).reshape((-1,))


def forward_discriminator(params: ParameterSet, f) -> Tensor:
    """Modality score in (0, 1) per row."""
    return ag.sigmoid(discriminator_logit(params, f))


def embed(spec: NetworkSpec, params: ParameterSet, x: np.ndarray, modality: str, batch: int = 64) -> np.ndarray:
    """Graph-free embedding of a stacked image array, batched to bound memory."""
    frozen = ParameterSet({k: Tensor(t.data) for k, t in params.items()})
    out = [forward_generator(spec, frozen, x[i : i + batch], modality).data for i in range(0, len(x), batch)]
    if not out:
        return np.zeros((0, spec.embed_dim), dtype=np.float32)
    return np.concatenate(out)
