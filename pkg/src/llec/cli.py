"""llec command line: encode, decode, train, bench, inspect, synth.

Exit codes: 0 ok, 2 format error, 3 model mismatch, 4 requested anchor tool
missing.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import container, event_io, metrics, synth
from .event_io import EventStream, FormatError, RangeError
from .hyperprior import HyperpriorModel, ModelCorruptionError
from .preprocess import PreprocessConfig, canonicalize, default_ts
from .trainer import TrainConfig, build_dataset, save_history_csv, train

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_MODEL_MISMATCH = 3
EXIT_TOOL_MISSING = 4


def _read_stream(path: str, width: int, height: int) -> EventStream:
    if path.endswith(".csv"):
        with open(path) as f:
            return event_io.parse_csv(f.read(), width, height)
    with open(path, "rb") as f:
        return event_io.parse_evt2(f.read(), width, height)


def _write_stream(stream: EventStream, path: str) -> None:
    if path.endswith(".csv"):
        with open(path, "w") as f:
            f.write(event_io.serialize_csv(stream))
    else:
        with open(path, "wb") as f:
            f.write(event_io.serialize_evt2(stream))


def _input_bits(stream: EventStream) -> int:
    """Size of the EVT2 representation of the (parsed) input, per the CR
    definition."""
    return len(event_io.serialize_evt2(stream)) * 8


def _print_report(rows: list[dict]) -> None:
    cols = ["name", "input_bits", "compressed_bits", "event_count", "cr", "s"]
    widths = {c: max(len(c), *(len(_fmt(r.get(c, ""))) for r in rows)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for r in rows:
        print("  ".join(_fmt(r.get(c, "")).ljust(widths[c]) for c in cols))


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def cmd_encode(args) -> int:
    model = HyperpriorModel.load(args.model)
    stream = _read_stream(args.input, args.width, args.height)
    ts = args.ts or default_ts(stream.sensor_width, stream.sensor_height)
    data = container.encode_stream(stream, model, PreprocessConfig(ts))
    with open(args.output, "wb") as f:
        f.write(data)
    report = metrics.CompressionReport.build(
        os.path.basename(args.input), _input_bits(canonicalize(stream)),
        len(data) * 8, len(stream),
        container.measure_bitstream(data, model.latent_size).as_dict())
    _print_report([report.as_dict()])
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report.as_dict(), f, indent=2)
    return EXIT_OK


def cmd_decode(args) -> int:
    model = HyperpriorModel.load(args.model)
    with open(args.input, "rb") as f:
        data = f.read()
    stream = container.decode_stream(data, model)
    _write_stream(stream, args.output)
    print(f"decoded {len(stream)} events -> {args.output}")
    return EXIT_OK


def cmd_train(args) -> int:
    with open(args.config) as f:
        cfg = json.load(f)
    width, height = cfg.get("width", 1280), cfg.get("height", 720)
    ts = cfg.get("ts") or default_ts(width, height)
    pre = PreprocessConfig(ts)
    train_streams = [_read_stream(p, width, height) for p in cfg["train_streams"]]
    val_streams = [_read_stream(p, width, height) for p in cfg["val_streams"]]
    tc = TrainConfig(**{k: cfg[k] for k in (
        "learning_rate", "lr_decay_factor", "lr_decay_every", "batch_size",
        "max_epochs", "early_stop_patience", "train_tile_target", "rng_seed")
        if k in cfg})
    seed = tc.rng_seed
    train_set = build_dataset(train_streams, pre, tc.train_tile_target, seed,
                              stream_ids=cfg["train_streams"])
    val_set = build_dataset(val_streams, pre, cfg.get("val_tile_target", 1000),
                            seed + 1, stream_ids=cfg["val_streams"])
    model = HyperpriorModel(seed=seed)
    model, history = train(model, train_set, val_set, tc, verbose=True)
    model.snap_to_float32()
    model.save(cfg["model_out"])
    if cfg.get("history_out"):
        save_history_csv(history, cfg["history_out"])
    print(f"saved model -> {cfg['model_out']} "
          f"(best val {min(h.val_loss for h in history):.4f} bits/symbol)")
    return EXIT_OK


def cmd_bench(args) -> int:
    model = HyperpriorModel.load(args.model)
    stream = _read_stream(args.input, args.width, args.height)
    ts = args.ts or default_ts(stream.sensor_width, stream.sensor_height)
    data = container.encode_stream(stream, model, PreprocessConfig(ts))
    canonical = canonicalize(stream)
    input_bits = _input_bits(canonical)
    rows = [metrics.CompressionReport.build(
        "llec", input_bits, len(data) * 8, len(stream),
        container.measure_bitstream(data, model.latent_size).as_dict()).as_dict()]

    requested = [t.strip() for t in args.anchors.split(",")] if args.anchors else []
    anchor_results = []
    if requested:
        # anchors run on the raw EVT2 bytes; re-serialize if the input was CSV
        if args.input.endswith(".csv"):
            with tempfile.NamedTemporaryFile(suffix=".raw", delete=False) as tf:
                tf.write(event_io.serialize_evt2(stream))
                raw_path = tf.name
        else:
            raw_path = args.input
        try:
            anchor_results = metrics.bench_anchors(raw_path, input_bits,
                                                   len(stream), requested)
        finally:
            if raw_path != args.input:
                os.unlink(raw_path)
        for a in anchor_results:
            row = {"name": a.tool, "input_bits": input_bits,
                   "event_count": len(stream)}
            if a.status == "ok":
                row.update(compressed_bits=a.compressed_bits, cr=a.cr, s=a.s)
            else:
                row.update(compressed_bits=f"skipped ({a.detail})")
            rows.append(row)
    _print_report(rows)
    if args.report:
        with open(args.report, "w") as f:
            json.dump({"rows": rows,
                       "anchor_versions": {a.tool: a.version
                                           for a in anchor_results}}, f, indent=2)
    if requested and anchor_results and all(a.status == "skipped"
                                            for a in anchor_results):
        return EXIT_TOOL_MISSING
    return EXIT_OK


def cmd_inspect(args) -> int:
    with open(args.input, "rb") as f:
        data = f.read()
    width, height, ts, seg_count, model_id = container._parse_header(data)
    print(f"sensor {width}x{height}  ts {ts} us  segments {seg_count}  "
          f"model {model_id.hex()}")
    bd = container.measure_bitstream(data)
    for k, v in bd.as_dict().items():
        print(f"  {k:>14}: {v}")
    return EXIT_OK


def cmd_synth(args) -> int:
    stream = synth.generate_synthetic(args.pattern, args.width, args.height,
                                      args.duration, args.rate, args.seed)
    _write_stream(stream, args.output)
    print(f"wrote {len(stream)} events ({args.pattern}) -> {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="llec",
                                 description="lossless event-camera codec")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_geometry(p):
        p.add_argument("--width", type=int, default=1280)
        p.add_argument("--height", type=int, default=720)
        p.add_argument("--ts", type=int, default=None,
                       help="segment length in us (power of two; default by resolution)")

    p = sub.add_parser("encode", help="compress an event file")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--report", default=None, help="write a JSON report")
    add_geometry(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decompress a container")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("-m", "--model", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="train the entropy model")
    p.add_argument("--config", required=True, help="JSON training config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="compare against anchor codecs")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--anchors", default="", help="comma list: lz4,bzip2,7z")
    p.add_argument("--report", default=None)
    add_geometry(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="show container structure")
    p.add_argument("input")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("synth", help="generate a synthetic stream")
    p.add_argument("--pattern", required=True, choices=synth.PATTERNS)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--duration", type=float, default=1.0, help="seconds")
    p.add_argument("--rate", type=float, default=1e5, help="events per second")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, RangeError, container.ContainerError,
            ModelCorruptionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except container.ModelMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
