"""``evlink`` command line: gen-dataset, simulate, encode, train, index, query, evaluate.

Exit codes: 0 success, 1 usage or configuration error, 2 malformed input data,
3 numeric divergence during training.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dataset import DatasetManifest, ManifestError, generate_toy_dataset, load_intensity
from .encoders import EncoderConfig, assemble_event_image, assemble_whole_bin, save_event_image
from .events import BinSpec, partition_bins
from .evt import EventFileError, load_event_file, save_event_file
from .nets import ShapeMismatch
from .retrieval import EmbeddingIndex, EmptyStream, UncoveredQuery, build_index, evaluate, query_topk
from .simulator import DegenerateTrajectory, IntensityFrame, MotionTrajectory, SimulatorConfig, simulate_dvs
from .training import (
    ABLATIONS,
    ConfigError,
    InsufficientInstances,
    NumericDivergence,
    TrainConfig,
    fit,
    metric_log_writer,
)

log = logging.getLogger("evlink")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
DATA_ERRORS = (
    EventFileError,
    ManifestError,
    CheckpointError,
    EmptyStream,
    UncoveredQuery,
    InsufficientInstances,
    ShapeMismatch,
    DegenerateTrajectory,
    FileNotFoundError,
    json.JSONDecodeError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging():
    level = os.environ.get("EVLINK_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise UsageError(f"EVLINK_LOG must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _bin_arg(text: str):
    if text == "all":
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a bin index or 'all', got {text!r}")
    if k < 0:
        raise argparse.ArgumentTypeError("bin index must be >= 0")
    return k


def _args_doc(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _log_config(name: str, doc: dict):
    log.info("resolved %s config: %s", name, json.dumps(doc, sort_keys=True))


# ------------------------------------------------------------------ commands


def cmd_gen_dataset(args):
    sim = SimulatorConfig(threshold=args.threshold)
    _log_config(
        "gen-dataset",
        dict(out=args.out, instances=args.instances, images=args.images, seed=args.seed, size=args.size,
             duration_us=args.duration, threshold=args.threshold),
    )
    m = generate_toy_dataset(args.out, args.instances, args.images, args.seed, args.size, args.duration, sim)
    log.info("wrote %d instances, %d images to %s", len(m.instances), m.num_images, args.out)


def cmd_simulate(args):
    cfg = SimulatorConfig(threshold=args.threshold, frame_rate=args.frame_rate)
    _log_config("simulate", _args_doc(args))
    frame = IntensityFrame.from_array(load_intensity(args.inp, cfg.epsilon))
    if args.motion == "lissajous":
        traj = MotionTrajectory.lissajous(args.duration, args.amplitude, args.period)
    else:
        traj = MotionTrajectory.linear(args.duration, args.dx, args.dy)
    stream = simulate_dvs(frame, traj, cfg)
    save_event_file(args.out, stream)
    log.info("wrote %d events to %s", len(stream), args.out)


def cmd_encode(args):
    enc = EncoderConfig(args.method, args.tau, args.cap, args.size)
    _log_config("encode", _args_doc(args))
    stream = load_event_file(args.inp)
    bins = partition_bins(stream, BinSpec(args.bin_duration, args.sub_bins))
    if not bins:
        raise EmptyStream(f"{args.inp}: stream has no full {args.bin_duration} us bin")
    if args.bin == "all":
        chosen = list(enumerate(bins))
    else:
        k = args.bin
        if k >= len(bins):
            raise UsageError(f"--bin {k} out of range; stream has {len(bins)} full bin(s)")
        chosen = [(k, bins[k])]
    out = Path(args.out)
    for k, b in chosen:
        img = assemble_whole_bin(b, enc) if args.whole_bin else assemble_event_image(b, enc, args.sub_bins)
        path = out if args.bin != "all" else out.with_name(f"{out.stem}.{k}{out.suffix}")
        save_event_image(path, img)
        log.info("wrote %s", path)


def load_train_config(args) -> TrainConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file {args.config} not found")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config} is not valid JSON: {exc}")
        cfg = TrainConfig.from_dict(doc, require_all=True)
    else:
        cfg = TrainConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.method is not None:
        over["method"] = args.method
    if args.epochs is not None:
        over["max_epochs"] = args.epochs
    if args.ablation:
        over["ablations"] = sorted(set(cfg.ablations) | set(args.ablation))
    return TrainConfig.from_dict({**cfg.to_dict(), **over}) if over else cfg


def cmd_train(args):
    cfg = load_train_config(args)
    _log_config("train", cfg.to_dict())
    manifest = DatasetManifest.load(args.inp)
    writer = metric_log_writer(args.metrics) if args.metrics else None
    try:
        ckpt = fit(manifest, cfg, on_epoch=writer)
    except NumericDivergence as exc:
        save_checkpoint(exc.checkpoint, f"{args.out}.diverged")
        log.error("%s; last finite state saved to %s.diverged", exc, args.out)
        raise
    finally:
        if writer is not None:
            writer.close()
    meta, blob = save_checkpoint(ckpt, args.out)
    log.info("wrote %s and %s", meta, blob)


def cmd_index(args):
    _log_config("index", _args_doc(args))
    ckpt = load_checkpoint(args.checkpoint)
    idx = build_index(DatasetManifest.load(args.inp), ckpt)
    meta, blob = idx.save(args.out)
    log.info("indexed %d images into %s", len(idx), meta)


def cmd_query(args):
    _log_config("query", _args_doc(args))
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    ckpt = load_checkpoint(args.checkpoint)
    idx = EmbeddingIndex.load(args.index)
    res = query_topk(idx, load_event_file(args.inp), ckpt, args.k, args.aggregate)
    if res.truncated:
        log.info("k=%d exceeds index size %d", args.k, len(idx))
    doc = {
        "results": [
            {"image_id": i, "instance_id": idx.instance_ids[idx.image_ids.index(i)], "distance": float(d)}
            for i, d in zip(res.image_ids, res.distances)
        ]
    }
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_evaluate(args):
    _log_config("evaluate", _args_doc(args))
    ckpt = load_checkpoint(args.checkpoint)
    idx = EmbeddingIndex.load(args.index)
    manifest = DatasetManifest.load(args.inp)
    queries = [(rec.id, load_event_file(manifest.resolve(rec.events))) for rec in manifest.instances]
    report = evaluate(idx, queries, ckpt, args.aggregate)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    log.info("mAP=%.4f acc@1=%.4f acc@3=%.4f", report.mAP, report.acc[1], report.acc[3])


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evlink", description="Event-stream to colour-image retrieval pipeline.", epilog=__doc__.split("\n\n", 1)[1])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-dataset", help="render a synthetic toy dataset with simulated event streams")
    g.add_argument("--out", required=True, help="output directory (manifest.json is written here)")
    g.add_argument("--seed", type=int, default=0, help="dataset seed")
    g.add_argument("--instances", type=int, default=10, help="number of instances")
    g.add_argument("--images", type=int, default=3, help="colour images per instance")
    g.add_argument("--size", type=int, default=32, help="image side in pixels")
    g.add_argument("--duration", type=int, default=300_000, help="event stream duration in microseconds")
    g.add_argument("--threshold", type=float, default=0.3, help="contrast threshold C")
    g.set_defaults(func=cmd_gen_dataset)

    s = sub.add_parser("simulate", help="simulate DVS events from a still image moved along a trajectory")
    s.add_argument("--in", dest="inp", required=True, help="input PGM/PNG image")
    s.add_argument("--out", required=True, help="output event file")
    s.add_argument("--motion", choices=["lissajous", "linear"], default="lissajous")
    s.add_argument("--duration", type=int, default=300_000, help="microseconds")
    s.add_argument("--amplitude", type=float, default=2.0, help="lissajous amplitude in pixels")
    s.add_argument("--period", type=int, default=90_000, help="lissajous period in microseconds")
    s.add_argument("--dx", type=float, default=4.0, help="linear shift in x over the duration")
    s.add_argument("--dy", type=float, default=0.0, help="linear shift in y over the duration")
    s.add_argument("--threshold", type=float, default=0.3, help="contrast threshold C")
    s.add_argument("--frame-rate", type=float, default=1000.0, help="sample rate in Hz")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("encode", help="encode one or all bins of an event file into event images")
    e.add_argument("--in", dest="inp", required=True, help="input event file")
    e.add_argument("--out", required=True, help="output event image path")
    e.add_argument("--method", choices=["ES", "TS", "EF"], default="EF")
    e.add_argument("--bin", type=_bin_arg, default=0, help="bin index, or 'all' (writes <stem>.<k><suffix>)")
    e.add_argument("--size", type=int, default=224, help="output side in pixels")
    e.add_argument("--tau", type=float, default=30_000.0, help="time-surface decay in microseconds")
    e.add_argument("--cap", type=int, default=8, help="stacking saturation count")
    e.add_argument("--bin-duration", type=int, default=90_000, help="microseconds")
    e.add_argument("--sub-bins", type=int, default=3, help="temporal channels per bin")
    e.add_argument("--whole-bin", action="store_true", help="encode the whole bin and replicate it per channel")
    e.set_defaults(func=cmd_encode)

    t = sub.add_parser("train", help="train generators, classifier and discriminator")
    t.add_argument("--in", dest="inp", required=True, help="dataset manifest.json")
    t.add_argument("--out", required=True, help="checkpoint prefix (writes PREFIX.json and PREFIX.bin)")
    t.add_argument("--config", help="JSON file listing every training config field")
    t.add_argument("--seed", type=int, help="override config seed")
    t.add_argument("--method", choices=["ES", "TS", "EF"], help="override event encoding")
    t.add_argument("--epochs", type=int, help="override max_epochs")
    t.add_argument("--ablation", action="append", choices=list(ABLATIONS), help="add an ablation (repeatable)")
    t.add_argument("--metrics", help="write one JSON line per epoch here")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("index", help="embed database colour images into an index")
    i.add_argument("--in", dest="inp", required=True, help="dataset manifest.json")
    i.add_argument("--checkpoint", required=True, help="checkpoint prefix")
    i.add_argument("--out", required=True, help="index prefix (writes PREFIX.json and PREFIX.bin)")
    i.set_defaults(func=cmd_index)

    q = sub.add_parser("query", help="rank database images for one event stream")
    q.add_argument("--in", dest="inp", required=True, help="query event file")
    q.add_argument("--index", required=True, help="index prefix")
    q.add_argument("--checkpoint", required=True, help="checkpoint prefix")
    q.add_argument("--k", type=int, default=5, help="number of results")
    q.add_argument("--aggregate", choices=["first", "mean"], default="first", help="how bins form one query")
    q.add_argument("--out", help="write results JSON here instead of stdout")
    q.set_defaults(func=cmd_query)

    v = sub.add_parser("evaluate", help="mAP and acc@K of every instance's stream against an index")
    v.add_argument("--in", dest="inp", required=True, help="dataset manifest.json supplying query streams")
    v.add_argument("--index", required=True, help="index prefix")
    v.add_argument("--checkpoint", required=True, help="checkpoint prefix")
    v.add_argument("--aggregate", choices=["first", "mean"], default="first", help="how bins form one query")
    v.add_argument("--out", help="write the report JSON here instead of stdout")
    v.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"evlink {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericDivergence as exc:
        print(f"evlink {args.command}: numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"evlink {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # remaining ValueErrors come from validating input files or parameters
        print(f"evlink {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
