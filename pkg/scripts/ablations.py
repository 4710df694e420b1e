"""Toy-scale ablation table: encodings (ES/TS/EF) and the nws/ntc/nal switches.

Every row trains from the same seed on the same generated dataset and reports
retrieval scores plus the modality-probe accuracy of the trained embeddings.

    python3 scripts/ablations.py --out runs/ablations [--epochs 200] [--seeds 0 1 2]
"""
import argparse
from pathlib import Path

import numpy as np

from evlink.dataset import generate_toy_dataset
from evlink.experiment import TOY_IMAGES, TOY_INSTANCES, TOY_SEED, load_config, run_pipeline
from evlink.probe import mean_probe_accuracy
from evlink.training import TrainConfig, load_pool

ROWS = [
    ("EF", []),
    ("ES", []),
    ("TS", []),
    ("EF", ["nws"]),
    ("EF", ["ntc"]),
    ("EF", ["nal"]),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).resolve().parent.parent / "configs" / "toy.json"))
    ap.add_argument("--out", default="runs/ablations")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()

    base = load_config(args.config)
    out = Path(args.out)
    manifest = generate_toy_dataset(out / "data", TOY_INSTANCES, TOY_IMAGES, TOY_SEED)
    print(f"{'method':6} {'ablation':8} {'mAP':>7} {'acc@1':>7} {'acc@3':>7} {'probe':>7}")
    for method, abl in ROWS:
        scores = []
        for seed in args.seeds:
            doc = {**base.to_dict(), "method": method, "ablations": abl, "seed": seed}
            if args.epochs is not None:
                doc["max_epochs"] = args.epochs
            cfg = TrainConfig.from_dict(doc)
            tag = f"{method}-{'-'.join(abl) or 'full'}-s{seed}"
            run = run_pipeline(out / tag, cfg, manifest=manifest)
            probe = mean_probe_accuracy(run.checkpoint, load_pool(manifest, cfg))
            scores.append((run.report.mAP, run.report.acc[1], run.report.acc[3], probe))
        m = np.mean(scores, axis=0)
        print(f"{method:6} {'-'.join(abl) or '-':8} {m[0]:7.3f} {m[1]:7.3f} {m[2]:7.3f} {m[3]:7.4f}", flush=True)


if __name__ == "__main__":
    main()
