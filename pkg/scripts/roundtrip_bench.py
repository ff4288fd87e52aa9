#!/usr/bin/env python3
"""Roundtrip timing and rate sweep over the synthetic generators.

For each pattern and event count: encode, decode, verify exactness, and
report CR, bits/event, and throughput. Pass --model to use trained weights;
the default is seeded random initialization (structure-only compression).
"""

import argparse
import time

from llec.container import decode_stream, encode_stream, measure_bitstream
from llec.event_io import serialize_evt2
from llec.hyperprior import HyperpriorModel
from llec.preprocess import PreprocessConfig, canonicalize
from llec.synth import PATTERNS, generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default=None)
    ap.add_argument("--width", type=int, default=640)
    ap.add_argument("--height", type=int, default=480)
    ap.add_argument("--ts", type=int, default=1024)
    ap.add_argument("--sizes", default="10000,100000,1000000")
    args = ap.parse_args()

    if args.model:
        model = HyperpriorModel.load(args.model)
    else:
        model = HyperpriorModel(seed=0)
        model.snap_to_float32()
    cfg = PreprocessConfig(args.ts)
    sizes = [int(float(s)) for s in args.sizes.split(",")]

    print(f"{'pattern':>18} {'events':>9} {'CR':>6} {'S':>7} "
          f"{'enc Mev/s':>9} {'dec Mev/s':>9}")
    for pattern in PATTERNS:
        for n in sizes:
            stream = generate_synthetic(pattern, args.width, args.height,
                                        0.25, n / 0.25, seed=7)
            canonical = canonicalize(stream)
            input_bits = len(serialize_evt2(canonical)) * 8
            t0 = time.monotonic()
            blob = encode_stream(stream, model, cfg)
            t1 = time.monotonic()
            decoded = decode_stream(blob, model)
            t2 = time.monotonic()
            assert decoded == canonical, (pattern, n)
            assert measure_bitstream(blob).total_bits == len(blob) * 8
            print(f"{pattern:>18} {n:>9} {input_bits / (len(blob) * 8):>6.3f} "
                  f"{len(blob) * 8 / len(canonical):>7.2f} "
                  f"{n / (t1 - t0) / 1e6:>9.2f} {n / (t2 - t1) / 1e6:>9.2f}")


if __name__ == "__main__":
    main()
