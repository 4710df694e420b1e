"""Checkpoints: a JSON manifest plus a raw little-endian float32 parameter blob.

``save_checkpoint(ckpt, "runs/model")`` writes ``runs/model.json`` and
``runs/model.bin``; parameters are concatenated in manifest order.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .nets import NetworkSpec, ParameterSet

FORMAT = "evlink-checkpoint-1"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    network: NetworkSpec
    params: ParameterSet
    config: dict = field(default_factory=dict)
    epoch: int = 0
    history: list = field(default_factory=list)


def _paths(prefix: str | os.PathLike) -> tuple[Path, Path]:
    p = Path(prefix)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".bin")


def save_checkpoint(ckpt: Checkpoint, prefix: str | os.PathLike) -> tuple[Path, Path]:
    meta_path, blob_path = _paths(prefix)
    entries, chunks, offset = [], [], 0
    for name, t in ckpt.params.items():
        arr = np.ascontiguousarray(t.data, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    meta = {
        "format": FORMAT,
        "network": ckpt.network.to_dict(),
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "history": ckpt.history,
        "params": entries,
        "blob": blob_path.name,
    }
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    blob_path.write_bytes(b"".join(chunks))
    return meta_path, blob_path


def load_checkpoint(prefix: str | os.PathLike) -> Checkpoint:
    meta_path, blob_path = _paths(prefix)
    try:
        meta = json.loads(meta_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint manifest {meta_path}: {exc}") from exc
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{meta_path}: unknown checkpoint format {meta.get('format')!r}")
    blob = np.fromfile(meta_path.with_name(meta["blob"]), dtype="<f4")
    tensors = {}
    for e in meta["params"]:
        end = e["offset"] + e["count"]
        if end > blob.size:
            raise CheckpointError(f"{blob_path}: blob too short for {e['name']}")
        arr = blob[e["offset"] : end].reshape(e["shape"]).astype(np.float32)
        tensors[e["name"]] = Tensor(arr, requires_grad=True)
    return Checkpoint(
        network=NetworkSpec(**meta["network"]),
        params=ParameterSet(tensors),
        config=meta["config"],
        epoch=meta["epoch"],
        history=meta["history"],
    )
