"""Embedding index over database colour images, Euclidean ranking and metrics."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import Checkpoint
from .dataset import DatasetManifest
from .events import EventStream
from .nets import embed
from .training import TrainConfig, color_tensor, encode_stream_bins

INDEX_FORMAT = "evlink-index-1"


class EmptyStream(ValueError):
    pass


class UncoveredQuery(ValueError):
    pass


@dataclass
class EmbeddingIndex:
    image_ids: list
    instance_ids: list
    embeddings: np.ndarray  # (N, d) float32

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float32)
        self.embeddings = emb if emb.ndim == 2 and len(emb) == len(self.image_ids) else emb.reshape(len(self.image_ids), -1)
        if len(set(self.image_ids)) != len(self.image_ids):
            raise ValueError("image ids must be unique")
        if len(self.instance_ids) != len(self.image_ids):
            raise ValueError("one instance id per image required")

    def __len__(self):
        return len(self.image_ids)

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]

    def save(self, prefix: str | os.PathLike) -> tuple[Path, Path]:
        p = Path(prefix)
        if p.suffix in (".json", ".bin"):
            p = p.with_suffix("")
        meta_path, blob_path = p.with_name(p.name + ".json"), p.with_name(p.name + ".bin")
        meta = {
            "format": INDEX_FORMAT,
            "d": self.d,
            "image_ids": list(self.image_ids),
            "instance_ids": list(self.instance_ids),
            "blob": blob_path.name,
        }
        meta_path.parent.mkdir(parents=True, exist_ok=True)
        meta_path.write_text(json.dumps(meta, indent=1) + "\n")
        blob_path.write_bytes(np.ascontiguousarray(self.embeddings, dtype="<f4").tobytes())
        return meta_path, blob_path

    @classmethod
    def load(cls, prefix: str | os.PathLike) -> "EmbeddingIndex":
        p = Path(prefix)
        if p.suffix in (".json", ".bin"):
            p = p.with_suffix("")
        meta_path = p.with_name(p.name + ".json")
        meta = json.loads(meta_path.read_text())
        if meta.get("format") != INDEX_FORMAT:
            raise ValueError(f"{meta_path}: not an index file")
        emb = np.fromfile(meta_path.with_name(meta["blob"]), dtype="<f4").astype(np.float32)
        return cls(meta["image_ids"], meta["instance_ids"], emb.reshape(len(meta["image_ids"]), meta["d"]))


@dataclass
class RankedResult:
    image_ids: list
    distances: np.ndarray
    relevant: np.ndarray  # bool
    truncated: bool = False  # k exceeded the index size

    def __len__(self):
        return len(self.image_ids)


@dataclass
class EvalReport:
    mAP: float
    acc: dict  # K -> accuracy
    per_query: list = field(default_factory=list)  # (query id, AP)

    def to_dict(self) -> dict:
        return {
            "mAP": self.mAP,
            **{f"acc@{k}": v for k, v in sorted(self.acc.items())},
            "per_query": [{"query": q, "AP": ap} for q, ap in self.per_query],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def train_config(ckpt: Checkpoint) -> TrainConfig:
    cfg = {k: v for k, v in ckpt.config.items() if k != "instance_ids"}
    return TrainConfig.from_dict(cfg)


def build_index(manifest: DatasetManifest, ckpt: Checkpoint) -> EmbeddingIndex:
    """Embed every database colour image with the colour-branch generator."""
    cfg = train_config(ckpt)
    ids, inst, tensors = [], [], []
    for rec in manifest.instances:
        for img in rec.images:
            ids.append(img)
            inst.append(rec.id)
            tensors.append(color_tensor(manifest.resolve(img), cfg.image_size))
    if not tensors:
        return EmbeddingIndex([], [], np.zeros((0, ckpt.network.embed_dim), np.float32))
    emb = embed(ckpt.network, ckpt.params, np.stack(tensors), "color")
    return EmbeddingIndex(ids, inst, emb)


def euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each row of ``b`` to vector ``a``, computed in float64."""
    diff = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    return np.sqrt((diff * diff).sum(axis=-1))


def rank(index: EmbeddingIndex, query: np.ndarray, k: int | None = None, instance=None) -> RankedResult:
    """Exhaustive scan; ascending distance, ties by ascending image id."""
    k = len(index) if k is None else k
    if k < 1:
        raise ValueError("k must be >= 1")
    dist = euclidean(query, index.embeddings)
    ids = np.array(index.image_ids, dtype=object)
    order = sorted(range(len(index)), key=lambda i: (dist[i], index.image_ids[i]))
    top = order[:k]
    rel = np.array([index.instance_ids[i] == instance for i in top], dtype=bool)
    return RankedResult([ids[i] for i in top], dist[top], rel, truncated=k > len(index))


def query_embedding(stream: EventStream, ckpt: Checkpoint, aggregate: str = "first") -> np.ndarray:
    cfg = train_config(ckpt)
    bins = encode_stream_bins(stream, cfg)
    if not bins:
        raise EmptyStream("stream has no full bin")
    if aggregate == "first":
        return embed(ckpt.network, ckpt.params, bins[0][None], "event")[0]
    if aggregate == "mean":
        return embed(ckpt.network, ckpt.params, np.stack(bins), "event").mean(axis=0)
    raise ValueError(f"unknown aggregate {aggregate!r}")


def query_topk(index: EmbeddingIndex, stream: EventStream, ckpt: Checkpoint, k: int, aggregate: str = "first", instance=None):
    return rank(index, query_embedding(stream, ckpt, aggregate), k, instance)


def average_precision(ranked: RankedResult, num_relevant_total: int) -> float:
    if num_relevant_total < 1:
        raise ValueError("num_relevant_total must be >= 1")
    hits, total = 0, 0.0
    for r, rel in enumerate(ranked.relevant, start=1):
        if rel:
            hits += 1
            total += hits / r
    return total / num_relevant_total


def accuracy_at(ranked: RankedResult, k: int, num_relevant_total: int) -> float:
    return float(np.sum(ranked.relevant[:k])) / min(k, num_relevant_total)


def evaluate_embeddings(
    index: EmbeddingIndex,
    queries: np.ndarray,
    query_instances: Sequence,
    query_ids: Sequence | None = None,
    ks: Sequence[int] = (1, 3),
) -> EvalReport:
    query_ids = list(query_instances) if query_ids is None else list(query_ids)
    aps, accs = [], {k: [] for k in ks}
    for q, inst in zip(queries, query_instances):
        total = sum(1 for i in index.instance_ids if i == inst)
        if total == 0:
            raise UncoveredQuery(f"no database image for query instance {inst!r}")
        ranked = rank(index, q, None, inst)
        aps.append(average_precision(ranked, total))
        for k in ks:
            accs[k].append(accuracy_at(ranked, k, total))
    return EvalReport(
        float(np.mean(aps)) if aps else 0.0,
        {k: float(np.mean(v)) if v else 0.0 for k, v in accs.items()},
        list(zip(query_ids, aps)),
    )


def evaluate(index: EmbeddingIndex, queries: Sequence[tuple], ckpt: Checkpoint, aggregate: str = "first") -> EvalReport:
    """``queries`` holds (instance_id, EventStream) pairs."""
    for inst, _ in queries:
        if inst not in index.instance_ids:
            raise UncoveredQuery(f"no database image for query instance {inst!r}")
    emb = np.stack([query_embedding(s, ckpt, aggregate) for _, s in queries]) if queries else np.zeros((0, index.d))
    return evaluate_embeddings(index, emb, [inst for inst, _ in queries])
