"""Generate the toy dataset, train with a config, index and evaluate; print the report.

    python3 scripts/run_toy_experiment.py --config configs/toy.json --out runs/toy
"""
import argparse
import json
import logging
from pathlib import Path

from evlink.experiment import load_config, run_pipeline
from evlink.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).resolve().parent.parent / "configs" / "toy.json"))
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--seed", type=int, help="override the training seed")
    ap.add_argument("--epochs", type=int, help="override max_epochs")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config)
    over = {k: v for k, v in (("seed", args.seed), ("max_epochs", args.epochs)) if v is not None}
    if over:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), **over})
    run = run_pipeline(args.out, cfg)
    doc = run.report.to_dict()
    doc.pop("per_query")
    print(json.dumps({**doc, "seconds": round(run.seconds, 1)}, indent=1))
    for name, path in run.files.items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
