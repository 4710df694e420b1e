"""The toy end-to-end experiment: generate, train, index, evaluate, all on disk."""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .dataset import DatasetManifest, generate_toy_dataset
from .evt import load_event_file
from .retrieval import EmbeddingIndex, EvalReport, build_index, evaluate, evaluate_embeddings
from .training import TrainConfig, fit, load_pool

TOY_INSTANCES, TOY_IMAGES, TOY_SEED = 10, 3, 7


def load_config(path: str | os.PathLike) -> TrainConfig:
    return TrainConfig.from_dict(json.loads(Path(path).read_text()), require_all=True)


@dataclass
class PipelineRun:
    manifest: DatasetManifest
    checkpoint: Checkpoint
    index: EmbeddingIndex
    report: EvalReport
    files: dict  # artefact name -> path
    seconds: float


def run_pipeline(
    workdir: str | os.PathLike,
    cfg: TrainConfig,
    instances: int = TOY_INSTANCES,
    images: int = TOY_IMAGES,
    data_seed: int = TOY_SEED,
    manifest: DatasetManifest | None = None,
) -> PipelineRun:
    """Run the whole pipeline under ``workdir``; pass ``manifest`` to reuse a dataset."""
    t0 = time.perf_counter()
    work = Path(workdir)
    if manifest is None:
        manifest = generate_toy_dataset(work / "data", instances, images, data_seed)
    ckpt = fit(load_pool(manifest, cfg), cfg)
    ckpt_json, ckpt_bin = save_checkpoint(ckpt, work / "model")
    index = build_index(manifest, ckpt)
    idx_json, idx_bin = index.save(work / "index")
    queries = [(rec.id, load_event_file(manifest.resolve(rec.events))) for rec in manifest.instances]
    report = evaluate(index, queries, ckpt)
    report_path = work / "report.json"
    report_path.write_text(report.to_json())
    files = {
        "checkpoint.json": ckpt_json,
        "checkpoint.bin": ckpt_bin,
        "index.json": idx_json,
        "index.bin": idx_bin,
        "report.json": report_path,
    }
    return PipelineRun(manifest, ckpt, index, report, files, time.perf_counter() - t0)


def random_embedding_map(instance_ids: list, draws: int, dim: int, seed: int) -> float:
    """mAP of i.i.d. Gaussian index and query embeddings, averaged over ``draws``.

    One query per instance, as in the toy evaluation.
    """
    rng = np.random.default_rng(seed)
    queries = sorted(set(instance_ids))
    ids = [f"img{k}" for k in range(len(instance_ids))]
    maps = []
    for _ in range(draws):
        index = EmbeddingIndex(ids, list(instance_ids), rng.normal(size=(len(ids), dim)))
        maps.append(evaluate_embeddings(index, rng.normal(size=(len(queries), dim)), queries).mAP)
    return float(np.mean(maps))
